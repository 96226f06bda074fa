//! Wait-time analysis of the daily bucketing process with a deferral stash.
//!
//! Four scenarios are covered, indexed by the number of hash choices `c` and
//! whether hashes are re-drawn every day (`rerandomize`):
//!
//! | scenario        | solver                          |
//! |-----------------|---------------------------------|
//! | `c = 1`, fresh  | [`rerand::beta_c1_rerand`]      |
//! | `c = 1`, fixed  | [`fixed::wait_c1_fixed`]        |
//! | `c >= 2`        | [`fluid::fluid_steady`]         |
//!
//! [`sim::mc_simulate`] runs the actual greedy scheduler at finite `n`, and
//! [`bounds::bound_wait`] gives the closed-form envelopes.

pub mod alpha_eq;
pub mod bounds;
pub mod error;
pub mod experiment;
pub mod fixed;
pub mod fluid;
pub mod params;
pub mod poisson;
pub mod rerand;
pub mod sim;

pub use error::{Error, Result};
pub use params::ScenarioParams;
pub use sim::{mc_simulate, McConfig, WaitStats};

/// Mean wait predicted for `p` in the `n -> infinity` limit, using whichever
/// solver fits the scenario.
pub fn theory_mean(p: &ScenarioParams) -> Result<f64> {
    p.check_solvable()?;
    match (p.c, p.rerandomize) {
        (1, true) => rerand::wait_c1_rerand(p.alpha, p.b),
        (1, false) => Ok(fixed::wait_c1_fixed(p.alpha, p.b, fixed::DEFAULT_L_MAX, 1e-12)?.value),
        (c, r) => Ok(fluid::fluid_steady(p.alpha, p.b, c, r, 1e-13)?.mean_wait),
    }
}
