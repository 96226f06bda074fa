//! Batch runner: simulation, theory and bound side by side, one CSV row per scenario.

use std::io::Write;

use serde::Serialize;

use crate::bounds::bound_wait;
use crate::error::{Error, Result};
use crate::params::ScenarioParams;
use crate::sim::{mc_simulate, McConfig};
use crate::theory_mean;

/// Bumped whenever a column is added, removed or reinterpreted.
pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: &str = "schema,alpha,b,c,rerandomize,n,m,days,replications,status,sim_mean,sim_max,sim_ci,\
stash_mean,theory_mean,bound,bound_formula,bound_valid,bound_big_o";

/// Simulation columns are empty when the point could not be simulated (see
/// `status`) or nothing was measured.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub schema: u32,
    pub alpha: f64,
    pub b: usize,
    pub c: usize,
    pub rerandomize: bool,
    pub n: usize,
    pub m: Option<usize>,
    pub days: u64,
    pub replications: usize,
    /// `ok`, `no measured days`, or why the point was skipped.
    pub status: String,
    pub sim_mean: Option<f64>,
    pub sim_max: Option<f64>,
    pub sim_ci: Option<f64>,
    pub stash_mean: Option<f64>,
    /// Empty when the solver does not apply or fails.
    pub theory_mean: Option<f64>,
    pub bound: f64,
    pub bound_formula: &'static str,
    pub bound_valid: bool,
    pub bound_big_o: bool,
}

impl ExperimentRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Every replication stream derives from `cfg.seed` and the scenario's index.
/// A point that cannot be simulated gets a row with its reason and empty
/// simulation columns; the rest of the grid still runs.
pub fn run(grid: &[ScenarioParams], cfg: &McConfig) -> Result<Vec<ExperimentRow>> {
    if cfg.replications == 0 {
        return Err(Error::InvalidParams("replications must be at least 1".into()));
    }
    Ok(grid
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let run_cfg = McConfig {
                seed: cfg.seed.wrapping_add((i as u64) << 32),
                ..*cfg
            };
            let sim = if cfg.days == 0 {
                Err("no measured days".to_string())
            } else {
                mc_simulate(p, &run_cfg).map_err(|e| format!("infeasible: {e}"))
            };
            let bound = bound_wait(p);
            let (status, stats) = match sim {
                Ok(s) => ("ok".to_string(), Some(s)),
                Err(reason) => (reason, None),
            };
            ExperimentRow {
                schema: SCHEMA_VERSION,
                alpha: p.alpha,
                b: p.b,
                c: p.c,
                rerandomize: p.rerandomize,
                n: p.n,
                m: stats.map(|s| s.m).or_else(|| p.buckets().ok()),
                days: cfg.days,
                replications: cfg.replications,
                status,
                sim_mean: stats.map(|s| s.mean_wait),
                sim_max: stats.map(|s| s.max_wait),
                sim_ci: stats.map(|s| s.ci_halfwidth).filter(|c| c.is_finite()),
                stash_mean: stats.map(|s| s.stash_mean),
                theory_mean: theory_mean(p).ok(),
                bound: bound.mean.value,
                bound_formula: bound.mean.formula,
                bound_valid: bound.valid,
                bound_big_o: bound.mean.big_o,
            }
        })
        .collect())
}

pub fn write_csv<W: Write>(rows: &[ExperimentRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(',')).map_err(|e| Error::Output(e.to_string()))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::Output(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Output(e.to_string()))
}
