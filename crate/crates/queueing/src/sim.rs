//! Monte Carlo simulation of the daily scheduler.
//!
//! Each day `n` fresh tokens arrive, each with `c` uniformly random candidate
//! buckets out of `m = round(n / (alpha b))`. The stash is placed first, oldest
//! first, then the new tokens, each into its least-loaded candidate with room
//! ([`psica_core::bucketing::greedy_choice`]). With fixed hashes a stashed token
//! keeps its candidates; with fresh hashes it draws new ones every day.
//!
//! Tokens arriving during the measured window are followed until placed, while
//! arrivals continue so the stash stays in steady state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use psica_core::bucketing::greedy_choice;

use crate::error::{Error, Result};
use crate::params::ScenarioParams;

/// Largest `c` the simulator supports.
pub const MAX_CHOICES: usize = 8;

/// Days allowed after the measured window for the last measured token to drain.
const DRAIN_LIMIT: u64 = 100_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McConfig {
    /// Measured days.
    pub days: u64,
    /// Discarded days before measuring; `None` uses `max(50, 10 / alpha)`.
    pub warmup: Option<u64>,
    pub replications: usize,
    pub seed: u64,
}

impl McConfig {
    pub fn new(days: u64, replications: usize, seed: u64) -> Self {
        McConfig {
            days,
            warmup: None,
            replications,
            seed,
        }
    }
}

pub fn default_warmup(alpha: f64) -> u64 {
    50.max((10.0 / alpha).ceil() as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WaitStats {
    /// Mean days a token spends in the stash.
    pub mean_wait: f64,
    /// Mean over arrival days of the largest wait among that day's tokens.
    pub max_wait: f64,
    /// Largest wait seen anywhere.
    pub max_observed: u64,
    /// Mean stash size at the end of a measured day.
    pub stash_mean: f64,
    /// 95% half-width for `mean_wait` from replication means; NaN with one replication.
    pub ci_halfwidth: f64,
    pub m: usize,
    /// `n / (m b)` after rounding `m`.
    pub alpha_effective: f64,
    pub replications: usize,
    pub measured_tokens: u64,
}

#[derive(Clone, Copy)]
struct Pending {
    arrival: u64,
    cands: [usize; MAX_CHOICES],
}

#[derive(Default)]
struct Replication {
    wait_sum: u64,
    count: u64,
    cohort_max_sum: u64,
    cohorts: u64,
    max_observed: u64,
    stash_sum: u64,
}

fn draw(rng: &mut ChaCha8Rng, c: usize, m: usize, cands: &mut [usize; MAX_CHOICES]) {
    for slot in cands.iter_mut().take(c) {
        *slot = rng.gen_range(0..m);
    }
}

fn replicate(p: &ScenarioParams, m: usize, warmup: u64, days: u64, mut rng: ChaCha8Rng) -> Result<Replication> {
    let (b, c) = (p.b, p.c);
    let measured = warmup..warmup + days;
    let mut loads = vec![0usize; m];
    let mut stash: Vec<Pending> = Vec::new();
    let mut next_stash: Vec<Pending> = Vec::new();
    let mut cohort_max = vec![0u64; days as usize];
    let mut outstanding = 0u64;
    let mut out = Replication::default();

    let mut day = 0u64;
    while day < measured.end || outstanding > 0 {
        if day >= measured.end + DRAIN_LIMIT {
            return Err(Error::Unstable { alpha: p.alpha });
        }
        loads.iter_mut().for_each(|l| *l = 0);
        next_stash.clear();
        let mut place = |mut t: Pending, rng: &mut ChaCha8Rng, out: &mut Replication| {
            if p.rerandomize && t.arrival != day {
                draw(rng, c, m, &mut t.cands);
            }
            match greedy_choice(&loads, b, &t.cands[..c]) {
                Some(j) => {
                    loads[j] += 1;
                    if measured.contains(&t.arrival) {
                        let w = day - t.arrival;
                        out.wait_sum += w;
                        out.count += 1;
                        out.max_observed = out.max_observed.max(w);
                        let slot = &mut cohort_max[(t.arrival - warmup) as usize];
                        *slot = (*slot).max(w);
                        if w > 0 {
                            outstanding -= 1;
                        }
                    }
                }
                None => {
                    if measured.contains(&t.arrival) && t.arrival == day {
                        outstanding += 1;
                    }
                    next_stash.push(t);
                }
            }
        };
        for &t in &stash {
            place(t, &mut rng, &mut out);
        }
        let mut fresh = Pending {
            arrival: day,
            cands: [0; MAX_CHOICES],
        };
        for _ in 0..p.n {
            draw(&mut rng, c, m, &mut fresh.cands);
            place(fresh, &mut rng, &mut out);
        }
        std::mem::swap(&mut stash, &mut next_stash);
        if measured.contains(&day) {
            out.stash_sum += stash.len() as u64;
        }
        day += 1;
    }
    out.cohorts = days;
    out.cohort_max_sum = cohort_max.iter().sum();
    Ok(out)
}

/// Runs `cfg.replications` independent copies of the scheduler in parallel.
pub fn mc_simulate(p: &ScenarioParams, cfg: &McConfig) -> Result<WaitStats> {
    p.check_shape()?;
    if p.alpha >= 1.0 {
        return Err(Error::Unstable { alpha: p.alpha });
    }
    if p.c > MAX_CHOICES {
        return Err(Error::InvalidParams(format!("c={} exceeds {MAX_CHOICES}", p.c)));
    }
    if cfg.replications == 0 || cfg.days == 0 {
        return Err(Error::InvalidParams("need at least one replication and one measured day".into()));
    }
    let m = p.buckets()?;
    let warmup = cfg.warmup.unwrap_or_else(|| default_warmup(p.alpha));
    let reps: Vec<Replication> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            replicate(p, m, warmup, cfg.days, rng)
        })
        .collect::<Result<_>>()?;

    let k = reps.len() as f64;
    let means: Vec<f64> = reps.iter().map(|r| r.wait_sum as f64 / r.count as f64).collect();
    let mean_wait = means.iter().sum::<f64>() / k;
    let ci_halfwidth = if reps.len() < 2 {
        f64::NAN
    } else {
        let var = means.iter().map(|x| (x - mean_wait).powi(2)).sum::<f64>() / (k - 1.0);
        let t = StudentsT::new(0.0, 1.0, k - 1.0).expect("k >= 2").inverse_cdf(0.975);
        t * (var / k).sqrt()
    };
    Ok(WaitStats {
        mean_wait,
        max_wait: reps.iter().map(|r| r.cohort_max_sum as f64 / r.cohorts as f64).sum::<f64>() / k,
        max_observed: reps.iter().map(|r| r.max_observed).max().unwrap_or(0),
        stash_mean: reps.iter().map(|r| r.stash_sum as f64 / cfg.days as f64).sum::<f64>() / k,
        ci_halfwidth,
        m,
        alpha_effective: p.n as f64 / (m * p.b) as f64,
        replications: reps.len(),
        measured_tokens: reps.iter().map(|r| r.count).sum(),
    })
}
