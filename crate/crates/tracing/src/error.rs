use psica_service::ServiceError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TracingError {
    #[error("device {0} has no keys; provision it first")]
    Unprovisioned(String),
    #[error("unknown device {0}")]
    UnknownDevice(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Core(#[from] psica_core::Error),
}

pub type Result<T> = std::result::Result<T, TracingError>;
