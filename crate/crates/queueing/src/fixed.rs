//! One hash choice, hashes fixed forever: every bucket is its own
//! discrete-time queue with Poisson(`alpha b`) arrivals and `b` services a day.
//!
//! `E[W] = (1 / (alpha b)) sum_{l >= 1} (1/l) E[(X_l - l b)^+]`, `X_l ~ Pois(l alpha b)`.
//!
//! With `x = alpha^b e^{(1 - alpha) b}`, term `l` is at most `x^l`, so the
//! remainder after `L` terms is at most `x^{L+1} / (1 - x)`.

use crate::error::{Error, Result};
use crate::poisson::excess_mean;

pub const DEFAULT_L_MAX: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    /// Upper bound on the omitted tail of the series.
    pub remainder_bound: f64,
    pub terms: usize,
}

/// Ratio of the geometric envelope.
pub fn envelope_ratio(alpha: f64, b: usize) -> f64 {
    (alpha * (1.0 - alpha).exp()).powi(b as i32)
}

/// Term `l` of the series, already divided by `alpha b`.
pub fn series_term(alpha: f64, b: usize, l: usize) -> f64 {
    let load = alpha * b as f64;
    excess_mean((l * b) as u64, l as f64 * load) / (l as f64 * load)
}

/// Sums terms until the envelope guarantees the tail is below `i_tol`.
pub fn wait_c1_fixed(alpha: f64, b: usize, l_max: usize, i_tol: f64) -> Result<SeriesValue> {
    if b == 0 {
        return Err(Error::InvalidParams("b must be positive".into()));
    }
    if alpha >= 1.0 {
        return Err(Error::Unstable { alpha });
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidParams(format!("alpha={alpha} must be in (0, 1)")));
    }
    let x = envelope_ratio(alpha, b);
    let mut value = 0.0;
    let mut xl = 1.0;
    for l in 1..=l_max {
        value += series_term(alpha, b, l);
        xl *= x;
        let remainder_bound = xl * x / (1.0 - x);
        if remainder_bound <= i_tol {
            return Ok(SeriesValue {
                value,
                remainder_bound,
                terms: l,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: l_max,
        bound: xl * x / (1.0 - x),
    })
}
