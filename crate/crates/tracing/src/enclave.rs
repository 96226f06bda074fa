//! Simulated trusted execution environment holding `K1` and `K2`. The keys
//! never leave this type; callers get token hashes and upload digests.

use std::fmt;

use psica_core::DomainPoint;
use psica_service::auth::Key32;
use psica_service::keyserver;
use psica_service::verifier::submission_digest;
use psica_service::{MessageType, Service, WireFrame};
use rand::{CryptoRng, RngCore};

use crate::error::Result;
use crate::suite::{self, ContextCell, NONCE_LEN};

/// The attestation root and enclave build a device runs with.
#[derive(Clone, Copy)]
pub struct Platform {
    pub vendor_key: Key32,
    pub measurement: [u8; 32],
}

pub struct Enclave {
    k1: Key32,
    k2: Key32,
}

impl fmt::Debug for Enclave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Enclave { .. }")
    }
}

impl Enclave {
    /// Attests to the key server and unseals the keys it returns.
    pub fn provision<R: RngCore + CryptoRng>(
        keyserver: &dyn Service,
        platform: &Platform,
        device_id: [u8; 16],
        rng: &mut R,
    ) -> Result<Self> {
        let mut nonce = [0u8; 16];
        rng.fill_bytes(&mut nonce);
        let req = keyserver::attestation_request(&platform.vendor_key, &device_id, &platform.measurement, &nonce);
        let reply = keyserver
            .handle(WireFrame::new(MessageType::AttestationRequest, device_id, req))
            .expect(MessageType::Provisioning)?;
        let (k1, k2) = keyserver::open_provisioning(&platform.vendor_key, &device_id, &nonce, &reply.payload)?;
        Ok(Enclave { k1, k2 })
    }

    /// For simulations that skip the key server.
    pub fn from_keys(k1: Key32, k2: Key32) -> Self {
        Enclave { k1, k2 }
    }

    pub fn true_token(&self, nonce: &[u8; NONCE_LEN], cell: &ContextCell, bits: u8) -> Result<DomainPoint> {
        suite::true_token(&self.k1, nonce, cell, bits)
    }

    pub fn upload_digest(&self, vc: &[u8; 16], bits: u8, tokens: &[DomainPoint]) -> [u8; 32] {
        submission_digest(&self.k2, vc, bits, tokens)
    }
}
