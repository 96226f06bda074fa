//! Fluid limit for `c >= 2` hash choices.
//!
//! With `s_i` the fraction of buckets holding at least `i` balls, throwing balls
//! at rate one per bucket into the least loaded of `c` random buckets gives
//!
//! `ds_i/dt = s_{i-1}^c - s_i^c`, `s_0 = 1`.
//!
//! Fixed hashes: a day throws `alpha b` balls per bucket on top of yesterday's
//! leftovers, then each bucket serves `b`, which shifts the profile down by `b`.
//! The steady state is a fixed point of that day map, and the mean wait is the
//! leftover per bucket over the daily arrivals.
//!
//! Fresh hashes: buckets start empty and receive `beta b` balls (arrivals plus
//! stash); `beta` is set so the served mass `sum_{i=1}^{b} s_i` equals `alpha b`,
//! and the mean wait is `beta / alpha - 1`.

use crate::error::{Error, Result};

/// Tail entries below this are dropped.
pub const TRUNCATION: f64 = 1e-14;
const MAX_DAY_ITERATIONS: usize = 200_000;

/// Tail profile `s_0 = 1 >= s_1 >= ...`, truncated where it drops below [`TRUNCATION`].
#[derive(Clone, Debug, PartialEq)]
pub struct FluidState {
    pub s: Vec<f64>,
    /// Balls per bucket thrown over one day.
    pub day_length: f64,
}

impl FluidState {
    pub fn empty(day_length: f64) -> Self {
        FluidState {
            s: vec![1.0],
            day_length,
        }
    }

    /// Mean balls per bucket, `sum_{i >= 1} s_i`.
    pub fn mean_load(&self) -> f64 {
        self.s[1..].iter().sum()
    }

    /// Mass in levels `1..=b`, which is what a day of service removes.
    pub fn served(&self, b: usize) -> f64 {
        self.s.iter().skip(1).take(b).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FluidSolution {
    /// Steady profile at the start of a day (fixed hashes) or at the end of
    /// the day's throws (fresh hashes).
    pub state: FluidState,
    pub mean_wait: f64,
    /// Balls per bucket per day including the stash, fresh hashes only.
    pub beta: Option<f64>,
    /// Day-map iterations (fixed) or bisection steps (fresh).
    pub iterations: usize,
}

fn derivative(s: &[f64], c: i32, out: &mut [f64]) {
    out[0] = 0.0;
    let mut prev = s[0].powi(c);
    for i in 1..s.len() {
        let cur = s[i].powi(c);
        out[i] = prev - cur;
        prev = cur;
    }
}

/// Classic fourth-order Runge-Kutta over `horizon`, with at most `max_step`
/// per step. One step moves mass up to four levels, so the profile is kept
/// padded with four empty levels above the highest occupied one. Levels below
/// [`TRUNCATION`] are trimmed only at the end.
pub fn integrate(s: &mut Vec<f64>, horizon: f64, c: usize, max_step: f64) {
    const PAD: usize = 4;
    const FLUSH: f64 = 1e-250;
    let steps = (horizon / max_step).ceil().max(1.0) as usize;
    let h = horizon / steps as f64;
    let c = c as i32;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..steps {
        let top = s.iter().rposition(|&v| v > 0.0).unwrap_or(0);
        if s.len() < top + 1 + PAD {
            s.resize(top + 1 + PAD, 0.0);
        }
        let n = s.len();
        for v in [&mut k1, &mut k2, &mut k3, &mut k4, &mut tmp] {
            v.resize(n, 0.0);
        }
        derivative(s, c, &mut k1);
        for i in 0..n {
            tmp[i] = s[i] + 0.5 * h * k1[i];
        }
        derivative(&tmp, c, &mut k2);
        for i in 0..n {
            tmp[i] = s[i] + 0.5 * h * k2[i];
        }
        derivative(&tmp, c, &mut k3);
        for i in 0..n {
            tmp[i] = s[i] + h * k3[i];
        }
        derivative(&tmp, c, &mut k4);
        for i in 1..n {
            let v = s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            s[i] = if v < FLUSH { 0.0 } else { v.min(1.0) };
        }
    }
    while s.len() > 1 && *s.last().unwrap() < TRUNCATION {
        s.pop();
    }
}

fn max_step(alpha: f64, b: usize) -> f64 {
    1e-3 * alpha * b as f64
}

fn check(alpha: f64, b: usize, c: usize) -> Result<()> {
    if b == 0 || c < 2 {
        return Err(Error::InvalidParams(format!("fluid solver needs b >= 1 and c >= 2 (b={b}, c={c})")));
    }
    if alpha >= 1.0 {
        return Err(Error::Unstable { alpha });
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidParams(format!("alpha={alpha} must be in (0, 1)")));
    }
    Ok(())
}

/// One day with fixed hashes: throw, then serve `b` per bucket.
pub fn day_map(state: &FluidState, b: usize, c: usize, step: f64) -> FluidState {
    let mut s = state.s.clone();
    integrate(&mut s, state.day_length, c, step);
    let mut next = vec![1.0];
    next.extend(s.iter().skip(b + 1).copied());
    FluidState {
        s: next,
        day_length: state.day_length,
    }
}

fn fixed_steady(alpha: f64, b: usize, c: usize, tol: f64) -> Result<FluidSolution> {
    let step = max_step(alpha, b);
    let mut state = FluidState::empty(alpha * b as f64);
    let mut dist = f64::INFINITY;
    for it in 1..=MAX_DAY_ITERATIONS {
        let next = day_map(&state, b, c, step);
        let n = next.s.len().max(state.s.len());
        let at = |v: &Vec<f64>, i: usize| v.get(i).copied().unwrap_or(0.0);
        dist = (0..n).map(|i| (at(&next.s, i) - at(&state.s, i)).abs()).fold(0.0, f64::max);
        state = next;
        if dist < tol {
            let mean_wait = state.mean_load() / (alpha * b as f64);
            return Ok(FluidSolution {
                state,
                mean_wait,
                beta: None,
                iterations: it,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: MAX_DAY_ITERATIONS,
        bound: dist,
    })
}

/// Profile after throwing `beta b` balls per bucket into empty buckets.
pub fn fresh_day(beta: f64, b: usize, c: usize, step: f64) -> FluidState {
    let mut s = vec![1.0];
    integrate(&mut s, beta * b as f64, c, step);
    FluidState {
        s,
        day_length: beta * b as f64,
    }
}

fn rerand_steady(alpha: f64, b: usize, c: usize, tol: f64) -> Result<FluidSolution> {
    let step = max_step(alpha, b);
    let target = alpha * b as f64;
    let gap = |beta: f64| fresh_day(beta, b, c, step).served(b) - target;
    let mut lo = alpha;
    let mut hi = 2.0 * alpha;
    if gap(lo) > 0.0 {
        return Err(Error::NoRoot(format!("served mass exceeds arrivals at beta=alpha={alpha}")));
    }
    let mut grow = 0;
    while gap(hi) < 0.0 {
        hi *= 2.0;
        grow += 1;
        if grow > 40 {
            return Err(Error::NoRoot(format!("no sign change up to beta={hi:e}")));
        }
    }
    let mut it = 0;
    while hi - lo > tol * alpha && it < 200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        it += 1;
    }
    let beta = 0.5 * (lo + hi);
    Ok(FluidSolution {
        state: fresh_day(beta, b, c, step),
        mean_wait: beta / alpha - 1.0,
        beta: Some(beta),
        iterations: it,
    })
}

/// Steady-state mean wait for `c >= 2`.
pub fn fluid_steady(alpha: f64, b: usize, c: usize, rerandomize: bool, tol: f64) -> Result<FluidSolution> {
    check(alpha, b, c)?;
    if rerandomize {
        rerand_steady(alpha, b, c, tol)
    } else {
        fixed_steady(alpha, b, c, tol)
    }
}
