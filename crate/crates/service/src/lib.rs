//! Network services around the PSI-WCA core: the two FSS servers, the
//! submission verifier and a simulated key server, all speaking one framed
//! binary protocol.

use std::sync::{Arc, Mutex};

pub mod auth;
pub mod client;
pub mod config;
pub mod error;
pub mod fss;
pub mod keyserver;
pub mod messages;
pub mod net;
pub mod store;
pub mod verifier;
pub mod wire;

pub use error::{Result, ServiceError};
pub use fss::{FssConfig, FssServer};
pub use keyserver::{KeyServer, KeyServerConfig};
pub use store::EpochStore;
pub use verifier::{VerificationServer, VerifierConfig};
pub use wire::{ErrorCode, MessageType, WireFrame};

/// Anything that answers one frame with one frame: an in-process server, a
/// TCP connection to one, or a wrapper around either.
pub trait Service: Send + Sync {
    fn handle(&self, frame: WireFrame) -> WireFrame;
}

impl<S: Service + ?Sized> Service for Arc<S> {
    fn handle(&self, frame: WireFrame) -> WireFrame {
        (**self).handle(frame)
    }
}

pub fn error_code(e: &ServiceError) -> ErrorCode {
    use psica_core::Error as C;
    match e {
        ServiceError::Wire(_) => ErrorCode::Malformed,
        ServiceError::Core(C::DomainMismatch { .. }) => ErrorCode::DomainMismatch,
        ServiceError::Core(C::GroupMismatch(_)) => ErrorCode::GroupMismatch,
        ServiceError::Core(C::EpochRegression { .. }) => ErrorCode::Epoch,
        ServiceError::Core(C::Protocol(_)) => ErrorCode::Protocol,
        ServiceError::Core(_) => ErrorCode::Malformed,
        ServiceError::Remote { code, .. } => *code,
        ServiceError::Auth(_) => ErrorCode::Unauthorized,
        ServiceError::Unexpected(_) | ServiceError::Config(_) => ErrorCode::Unsupported,
        ServiceError::Io(_) => ErrorCode::Internal,
    }
}

pub(crate) fn failure_frame(ty: MessageType, query_id: [u8; 16], e: &ServiceError) -> WireFrame {
    let message = match e {
        ServiceError::Remote { message, .. } => message.clone(),
        other => other.to_string(),
    };
    WireFrame::failure(ty, query_id, error_code(e), &message)
}

/// Keeps the encoded request and reply of every exchange.
pub struct Recording<S> {
    inner: S,
    log: Mutex<Vec<(Vec<u8>, Vec<u8>)>>,
}

impl<S: Service> Recording<S> {
    pub fn new(inner: S) -> Self {
        Recording {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn exchanges(&self) -> Vec<(Vec<u8>, Vec<u8>)> {
        self.log.lock().unwrap().clone()
    }

    pub fn requests(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    pub fn clear(&self) {
        self.log.lock().unwrap().clear();
    }
}

impl<S: Service> Service for Recording<S> {
    fn handle(&self, frame: WireFrame) -> WireFrame {
        let req = frame.encode();
        let reply = self.inner.handle(frame);
        self.log.lock().unwrap().push((req, reply.encode()));
        reply
    }
}
