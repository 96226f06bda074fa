//! Simulated contact tracing on top of the PSI-WCA services: devices with a
//! simulated enclave exchange nonces, infected users upload through the
//! verifier, and anyone can learn their total exposure in one round.

pub mod device;
pub mod enclave;
pub mod error;
pub mod scenario;
pub mod suite;
pub mod world;

pub use device::{Device, Scorer, Signal, StrengthScorer, TraceMode, TraceOutcome, UnitScorer};
pub use enclave::{Enclave, Platform};
pub use error::{Result, TracingError};
pub use scenario::{Scenario, ScenarioReport};
pub use suite::{ContextCell, RawToken};
pub use world::{Endpoints, World, WorldConfig};
