use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("group mismatch: {0}")]
    GroupMismatch(String),
    #[error("domain length mismatch: expected {expected} bits, got {got}")]
    DomainMismatch { expected: u8, got: u8 },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("epoch regression: window is at epoch {current}, got {requested}")]
    EpochRegression { current: u64, requested: u64 },
    #[error("malformed encoding: {0}")]
    Codec(String),
}

pub type Result<T> = std::result::Result<T, Error>;
