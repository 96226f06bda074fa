//! Poisson probabilities and tail moments in log space.
//!
//! Tails are summed from their largest term outward with term ratios, so
//! nothing underflows even when the mean is in the thousands and the tail is
//! far below `f64::MIN_POSITIVE` relative to the head.

use statrs::function::gamma::ln_gamma;

pub fn ln_pmf(k: u64, mu: f64) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * mu.ln() - mu - ln_gamma(k as f64 + 1.0)
}

pub fn pmf(k: u64, mu: f64) -> f64 {
    ln_pmf(k, mu).exp()
}

/// `sum_{j >= 0} w(j) p_{start+j} / p_start` for a weight that grows at most
/// polynomially, assuming `start >= mu` so the ratios are below one.
fn upper_sum(start: u64, mu: f64, weight: impl Fn(u64) -> f64) -> f64 {
    let mut ratio = 1.0;
    let mut sum = 0.0;
    for j in 0.. {
        let term = weight(j) * ratio;
        sum += term;
        if j > 0 && term <= sum * 1e-17 {
            break;
        }
        ratio *= mu / (start + j + 1) as f64;
        if ratio == 0.0 {
            break;
        }
    }
    sum
}

/// `P(X >= k)`.
pub fn tail_ge(k: u64, mu: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if (k as f64) < mu {
        let below: f64 = (0..k).map(|i| pmf(i, mu)).sum();
        return (1.0 - below).max(0.0);
    }
    (ln_pmf(k, mu) + upper_sum(k, mu, |_| 1.0).ln()).exp()
}

/// `E[(X - level)^+] = sum_{i > level} (i - level) P(X = i)`.
pub fn excess_mean(level: u64, mu: f64) -> f64 {
    if (level as f64) < mu {
        // mu - level + E[(level - X)^+], a finite sum
        let short: f64 = (0..level).map(|i| (level - i) as f64 * pmf(i, mu)).sum();
        return mu - level as f64 + short;
    }
    let start = level + 1;
    (ln_pmf(start, mu) + upper_sum(start, mu, |j| (j + 1) as f64).ln()).exp()
}
