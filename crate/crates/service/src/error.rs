use thiserror::Error;

use crate::wire::ErrorCode;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("malformed frame: {0}")]
    Wire(String),
    #[error(transparent)]
    Core(#[from] psica_core::Error),
    #[error("peer answered {code:?}: {message}")]
    Remote { code: ErrorCode, message: String },
    #[error("unexpected reply: {0}")]
    Unexpected(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ServiceError>;
