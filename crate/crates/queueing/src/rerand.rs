//! One hash choice, hashes re-drawn daily.
//!
//! Every day each bucket receives a Poisson number of balls with mean `beta b`
//! (new arrivals plus the re-hashed stash) and serves up to `b`. In steady
//! state the served mass equals the arrivals, which pins `beta`:
//!
//! `alpha = 1 - (1/b) sum_{k=0}^{b} (b - k) Pois(beta b)(k)`.
//!
//! A stashed ball is placed with the same probability every day, so its wait is
//! geometric with mean `beta / alpha - 1`.

use crate::error::{Error, Result};
use crate::poisson::pmf;

fn check(alpha: f64, b: usize) -> Result<()> {
    if b == 0 {
        return Err(Error::InvalidParams("b must be positive".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        if alpha >= 1.0 {
            return Err(Error::Unstable { alpha });
        }
        return Err(Error::InvalidParams(format!("alpha={alpha} must be in (0, 1)")));
    }
    Ok(())
}

/// Served fraction of capacity minus `alpha`; increasing in `beta`.
pub fn residual(beta: f64, alpha: f64, b: usize) -> f64 {
    let mu = beta * b as f64;
    let idle: f64 = (0..=b as u64).map(|k| (b as u64 - k) as f64 * pmf(k, mu)).sum();
    1.0 - idle / b as f64 - alpha
}

/// Solves for `beta` by bisection. The root lies above `alpha`; the upper end
/// starts at `1 / alpha` and doubles until the residual changes sign.
pub fn beta_c1_rerand(alpha: f64, b: usize, tol: f64) -> Result<f64> {
    check(alpha, b)?;
    let mut lo = alpha;
    let mut hi = 1.0 / alpha;
    if residual(lo, alpha, b) > 0.0 {
        return Err(Error::NoRoot(format!("residual positive at beta=alpha={alpha}")));
    }
    let mut grow = 0;
    while residual(hi, alpha, b) < 0.0 {
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(Error::NoRoot(format!("no sign change up to beta={hi:e}")));
        }
    }
    for _ in 0..500 {
        let mid = 0.5 * (lo + hi);
        let r = residual(mid, alpha, b);
        if r.abs() < tol && hi - lo < tol.max(f64::EPSILON * hi) {
            return Ok(mid);
        }
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            return Ok(mid);
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn wait_c1_rerand(alpha: f64, b: usize) -> Result<f64> {
    Ok(beta_c1_rerand(alpha, b, 1e-14)? / alpha - 1.0)
}

/// Leading term of the expected worst wait among `n` tokens. The wait is
/// geometric with `P(W >= k) = ((beta - alpha) / beta)^k`, so the maximum of
/// `n` draws is `log n / log(beta / (beta - alpha))` up to an additive constant,
/// which is not included.
pub fn wait_max_c1_rerand(alpha: f64, b: usize, n: usize) -> Result<f64> {
    let beta = beta_c1_rerand(alpha, b, 1e-14)?;
    if n <= 1 || beta <= alpha {
        return Ok(0.0);
    }
    Ok((n as f64).ln() / (beta / (beta - alpha)).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_points() {
        assert!((wait_c1_rerand(5.0 / 16.0, 2).unwrap() - 0.05567).abs() < 5e-6);
        assert!((wait_c1_rerand(5.0 / 12.0, 3).unwrap() - 0.04604).abs() < 5e-6);
    }

    #[test]
    fn small_alpha_limit() {
        for b in 1..5 {
            let beta = beta_c1_rerand(1e-4, b, 1e-16).unwrap();
            assert!((beta / 1e-4 - 1.0) < 1e-3, "b={b} beta={beta}");
        }
    }

    #[test]
    fn root_beyond_inverse_alpha() {
        let alpha = 0.95;
        let beta = beta_c1_rerand(alpha, 1, 1e-13).unwrap();
        assert!(beta > 1.0 / alpha);
        assert!(residual(beta, alpha, 1).abs() < 1e-12);
    }

    #[test]
    fn worst_case_term() {
        assert_eq!(wait_max_c1_rerand(0.3, 2, 1).unwrap(), 0.0);
        let a = wait_max_c1_rerand(0.3, 2, 1000).unwrap();
        let b = wait_max_c1_rerand(0.3, 2, 1_000_000).unwrap();
        assert!((b / a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(beta_c1_rerand(1.0, 2, 1e-9), Err(Error::Unstable { .. })));
        assert!(beta_c1_rerand(0.0, 2, 1e-9).is_err());
        assert!(beta_c1_rerand(0.5, 0, 1e-9).is_err());
    }
}
