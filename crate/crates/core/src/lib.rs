//! Building blocks for two-server private set intersection with weighted
//! cardinality: a distributed point function over Abelian groups, the
//! one-shot and sliding-window PSI-WCA engine, and the leak-free bucketing
//! scheduler with its deferral stash.

pub mod bucketing;
pub mod domain;
pub mod dpf;
pub mod error;
pub mod group;
pub mod prg;
pub mod psi;

pub use domain::DomainPoint;
pub use dpf::{DpfKey, DpfParams, Party};
pub use error::{Error, Result};
pub use group::{Group, GroupElement};
pub use prg::PrgCounter;
