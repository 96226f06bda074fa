use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One point of the scheduling design space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// Occupancy ratio `n / (b m)`.
    pub alpha: f64,
    pub b: usize,
    pub c: usize,
    pub rerandomize: bool,
    /// New tokens per day; only used by finite-size experiments.
    pub n: usize,
}

impl ScenarioParams {
    pub fn new(alpha: f64, b: usize, c: usize, rerandomize: bool, n: usize) -> Self {
        ScenarioParams {
            alpha,
            b,
            c,
            rerandomize,
            n,
        }
    }

    pub fn check_shape(&self) -> Result<()> {
        if self.b == 0 || self.c == 0 {
            return Err(Error::InvalidParams(format!("b={} and c={} must be positive", self.b, self.c)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParams(format!("alpha={} must be positive", self.alpha)));
        }
        Ok(())
    }

    /// Steady-state solvers need `0 < alpha < 1`.
    pub fn check_solvable(&self) -> Result<()> {
        self.check_shape()?;
        if self.alpha >= 1.0 {
            return Err(Error::Unstable { alpha: self.alpha });
        }
        Ok(())
    }

    /// Bucket count for a finite experiment: `round(n / (alpha b))`.
    pub fn buckets(&self) -> Result<usize> {
        self.check_shape()?;
        let m = (self.n as f64 / (self.alpha * self.b as f64)).round() as usize;
        if m == 0 {
            return Err(Error::InvalidParams(format!(
                "n={} alpha={} b={} gives no buckets",
                self.n, self.alpha, self.b
            )));
        }
        Ok(m)
    }

    /// `alpha b`, the expected number of arrivals per bucket per day.
    pub fn load(&self) -> f64 {
        self.alpha * self.b as f64
    }
}

/// The eight scenarios of the reference experiment: `(alpha, b)` in
/// `{(5/16, 2), (5/12, 3)}` crossed with `c` in `{1, 2}` and both hash policies,
/// at `n = 25000` (so `m` is 40000 and 20000 exactly).
pub fn reference_grid() -> Vec<ScenarioParams> {
    let mut grid = Vec::new();
    for c in [1, 2] {
        for rerandomize in [true, false] {
            for (alpha, b) in [(5.0 / 16.0, 2), (5.0 / 12.0, 3)] {
                grid.push(ScenarioParams::new(alpha, b, c, rerandomize, 25_000));
            }
        }
    }
    grid
}
