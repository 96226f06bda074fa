//! Simulated key server. Attestation is a MAC under a vendor key standing in
//! for the platform's signed quote; a passing device receives `K1 | K2`
//! sealed to a key only that device's enclave can derive.

use std::collections::HashSet;
use std::sync::Mutex;

use crate::auth::{self, Key32};
use crate::error::{Result, ServiceError};
use crate::messages::{Health, Reader, Role};
use crate::wire::{ErrorCode, MessageType, WireFrame};
use crate::Service;

const PROVISION_AAD: &[u8] = b"psica provision v1";

#[derive(Clone, Debug)]
pub struct KeyServerConfig {
    pub vendor_key: Key32,
    /// Enclave measurements allowed to receive keys.
    pub measurements: Vec<[u8; 32]>,
    pub k1: Key32,
    pub k2: Key32,
}

fn quote(vendor_key: &Key32, device_id: &[u8; 16], measurement: &[u8; 32], nonce: &[u8; 16]) -> [u8; 32] {
    auth::hmac_sha256(vendor_key, &[b"psica attest", device_id, measurement, nonce])
}

fn sealing_key(vendor_key: &Key32, device_id: &[u8; 16], nonce: &[u8; 16]) -> Key32 {
    auth::hmac_sha256(vendor_key, &[b"psica provision", device_id, nonce])
}

/// `device_id [16] | measurement [32] | nonce [16] | quote [32]`.
pub fn attestation_request(vendor_key: &Key32, device_id: &[u8; 16], measurement: &[u8; 32], nonce: &[u8; 16]) -> Vec<u8> {
    let mut out = Vec::with_capacity(96);
    out.extend_from_slice(device_id);
    out.extend_from_slice(measurement);
    out.extend_from_slice(nonce);
    out.extend_from_slice(&quote(vendor_key, device_id, measurement, nonce));
    out
}

/// Device side: recovers `(K1, K2)` from a `Provisioning` payload.
pub fn open_provisioning(vendor_key: &Key32, device_id: &[u8; 16], nonce: &[u8; 16], payload: &[u8]) -> Result<(Key32, Key32)> {
    let plain = auth::open(&sealing_key(vendor_key, device_id, nonce), PROVISION_AAD, payload)?;
    if plain.len() != 64 {
        return Err(ServiceError::Wire("provisioning payload has the wrong length".into()));
    }
    Ok((plain[..32].try_into().unwrap(), plain[32..].try_into().unwrap()))
}

pub struct KeyServer {
    cfg: KeyServerConfig,
    used_nonces: Mutex<HashSet<[u8; 16]>>,
}

impl KeyServer {
    pub fn new(cfg: KeyServerConfig) -> Self {
        KeyServer {
            cfg,
            used_nonces: Mutex::new(HashSet::new()),
        }
    }

    fn provision(&self, frame: &WireFrame) -> Result<WireFrame> {
        let mut r = Reader::new(&frame.payload);
        let device_id: [u8; 16] = r.array()?;
        let measurement: [u8; 32] = r.array()?;
        let nonce: [u8; 16] = r.array()?;
        let tag: [u8; 32] = r.array()?;
        r.finish()?;
        if !auth::verify_hmac(&self.cfg.vendor_key, &[b"psica attest", &device_id, &measurement, &nonce], &tag) {
            return Err(ServiceError::Auth("attestation quote does not verify".into()));
        }
        if !self.cfg.measurements.contains(&measurement) {
            return Err(ServiceError::Auth("enclave measurement not on the allow list".into()));
        }
        if !self.used_nonces.lock().unwrap().insert(nonce) {
            return Err(ServiceError::Remote {
                code: ErrorCode::Replay,
                message: "attestation nonce reused".into(),
            });
        }
        let mut keys = self.cfg.k1.to_vec();
        keys.extend_from_slice(&self.cfg.k2);
        let sealed = auth::seal(
            &sealing_key(&self.cfg.vendor_key, &device_id, &nonce),
            PROVISION_AAD,
            &keys,
            &mut rand::thread_rng(),
        );
        Ok(WireFrame::new(MessageType::Provisioning, frame.query_id, sealed))
    }
}

impl Service for KeyServer {
    fn handle(&self, frame: WireFrame) -> WireFrame {
        let res = match frame.message_type {
            MessageType::AttestationRequest => self.provision(&frame),
            MessageType::Health => Ok(WireFrame::new(
                MessageType::HealthReply,
                frame.query_id,
                Health {
                    role: Role::KeyServer,
                    party: None,
                    epoch: 0,
                    stored: self.used_nonces.lock().unwrap().len() as u64,
                }
                .encode(),
            )),
            other => Err(ServiceError::Unexpected(format!("{other:?} is not served here"))),
        };
        res.unwrap_or_else(|e| crate::failure_frame(MessageType::Reject, frame.query_id, &e))
    }
}
