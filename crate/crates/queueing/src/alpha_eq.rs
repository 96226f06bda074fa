//! Occupancy at which re-drawing hashes daily stops paying off.
//!
//! The crossing compares the mean wait with fresh hashes against the mean
//! backlog a fixed-hash bucket carries, `alpha b E[W_fixed]` (by Little's law,
//! the number of deferred tokens per bucket).
//!
//! Note that the per-token mean waits themselves never cross: fresh hashes
//! wait strictly less than fixed hashes at every occupancy
//! (see [`mean_wait_gap`]).

use crate::error::{Error, Result};
use crate::fixed::{wait_c1_fixed, DEFAULT_L_MAX};
use crate::rerand::wait_c1_rerand;

const SCAN_LO: f64 = 0.01;
const SCAN_HI: f64 = 0.99;
const SCAN_STEP: f64 = 0.01;

fn fixed_mean(alpha: f64, b: usize) -> Result<f64> {
    Ok(wait_c1_fixed(alpha, b, DEFAULT_L_MAX, 1e-15)?.value)
}

/// Fresh-hash mean wait minus fixed-hash backlog per bucket.
pub fn crossing_gap(alpha: f64, b: usize) -> Result<f64> {
    Ok(wait_c1_rerand(alpha, b)? - alpha * b as f64 * fixed_mean(alpha, b)?)
}

/// Fresh-hash mean wait minus fixed-hash mean wait.
pub fn mean_wait_gap(alpha: f64, b: usize) -> Result<f64> {
    Ok(wait_c1_rerand(alpha, b)? - fixed_mean(alpha, b)?)
}

/// First sign change of [`crossing_gap`] on `(0.01, 0.99)`, refined by bisection.
pub fn alpha_eq(b: usize, tol: f64) -> Result<f64> {
    if b == 0 {
        return Err(Error::InvalidParams("b must be positive".into()));
    }
    let mut lo = SCAN_LO;
    let mut g_lo = crossing_gap(lo, b)?;
    let mut hi = None;
    let mut a = SCAN_LO;
    while a < SCAN_HI {
        let next = (a + SCAN_STEP).min(SCAN_HI);
        let g = crossing_gap(next, b)?;
        if g.signum() != g_lo.signum() {
            hi = Some(next);
            break;
        }
        lo = next;
        g_lo = g;
        a = next;
    }
    let Some(mut hi) = hi else {
        return Err(Error::NoRoot(format!("no crossing for b={b} on ({SCAN_LO}, {SCAN_HI})")));
    };
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let g = crossing_gap(mid, b)?;
        if g.signum() == g_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_hashes_always_wait_less() {
        for b in 1..=4 {
            for i in 5..95 {
                let a = i as f64 / 100.0;
                assert!(mean_wait_gap(a, b).unwrap() < 0.0, "b={b} alpha={a}");
            }
        }
    }

    #[test]
    fn crossings_for_b_2_to_4() {
        for (b, want) in [(2, 0.433185), (3, 0.317061), (4, 0.246322)] {
            let got = alpha_eq(b, 1e-9).unwrap();
            assert!((got - want).abs() < 1e-5, "b={b}: {got}");
            assert!(crossing_gap(got, b).unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_zero_capacity() {
        assert!(alpha_eq(0, 1e-6).is_err());
    }
}
