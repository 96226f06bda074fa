use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unstable: occupancy {alpha} >= 1 makes the stash grow without bound")]
    Unstable { alpha: f64 },
    #[error("no root: {0}")]
    NoRoot(String),
    #[error("not converged after {iterations} steps (remaining error bound {bound:e})")]
    NotConverged { iterations: usize, bound: f64 },
    #[error("csv output failed: {0}")]
    Output(String),
}

pub type Result<T> = std::result::Result<T, Error>;
