//! Submission verification: checks an infected user's upload against the
//! digest computed inside their device, then forwards it to both FSS servers.

use std::collections::HashSet;
use std::sync::{Arc, Mutex};

use psica_core::DomainPoint;
use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::auth::{self, Key32};
use crate::error::{Result, ServiceError};
use crate::fss::roll_payload;
use crate::messages::{self, Ack, Health, Reader, Role, RollReport, SubmissionPayload, UploadPayload};
use crate::wire::{ErrorCode, MessageType, WireFrame};
use crate::Service;

/// `u* = SHA-256(HMAC(K2, vc | bits | count | values))`.
pub fn submission_digest(k2: &Key32, vc: &[u8; 16], bits: u8, tokens: &[DomainPoint]) -> [u8; 32] {
    let mut body = Vec::new();
    messages::encode_tokens(bits, tokens, &mut body);
    Sha256::digest(auth::hmac_sha256(k2, &[vc, &body])).into()
}

/// Payload of a `ChallengeRequest`: the health authority's tag on the frame id.
pub fn challenge_request(hcp_key: &Key32, request_id: &[u8; 16]) -> Vec<u8> {
    auth::hmac_sha256(hcp_key, &[b"psica challenge", request_id]).to_vec()
}

#[derive(Clone, Debug)]
pub struct VerifierConfig {
    pub k2: Key32,
    pub hcp_key: Key32,
    pub origin_key: Key32,
}

pub struct VerificationServer {
    cfg: VerifierConfig,
    fss: [Arc<dyn Service>; 2],
    outstanding: Mutex<HashSet<[u8; 16]>>,
    epoch: Mutex<u64>,
}

impl VerificationServer {
    pub fn new(cfg: VerifierConfig, fss: [Arc<dyn Service>; 2]) -> Self {
        VerificationServer {
            cfg,
            fss,
            outstanding: Mutex::new(HashSet::new()),
            epoch: Mutex::new(0),
        }
    }

    /// Rolls both FSS servers to `now`; fails unless they report the same expiry.
    pub fn roll(&self, now: u64) -> Result<RollReport> {
        let payload = roll_payload(&self.cfg.origin_key, now);
        let mut id = [0u8; 16];
        id[..8].copy_from_slice(&now.to_le_bytes());
        let reports = self.fss.each_ref().map(|s| {
            s.handle(WireFrame::new(MessageType::EpochRoll, id, payload.clone()))
                .expect(MessageType::RollReport)
                .and_then(|f| RollReport::decode(&f.payload))
        });
        let [r0, r1] = reports;
        let (r0, r1) = (r0?, r1?);
        if r0.epoch != r1.epoch || r0.expired_tokens != r1.expired_tokens || r0.expired_epochs != r1.expired_epochs {
            return Err(ServiceError::Unexpected(format!("servers rolled differently: {r0:?} vs {r1:?}")));
        }
        *self.epoch.lock().unwrap() = now;
        Ok(r0)
    }

    fn on_challenge(&self, frame: &WireFrame) -> Result<WireFrame> {
        if !auth::verify_hmac(&self.cfg.hcp_key, &[b"psica challenge", &frame.query_id], &frame.payload) {
            return Err(ServiceError::Auth("challenge request not signed by a health authority".into()));
        }
        let mut vc = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut vc);
        self.outstanding.lock().unwrap().insert(vc);
        Ok(WireFrame::new(MessageType::Challenge, frame.query_id, vc.to_vec()))
    }

    fn on_submission(&self, frame: &WireFrame) -> Result<WireFrame> {
        let sub = SubmissionPayload::decode(&frame.payload)?;
        if !self.outstanding.lock().unwrap().remove(&sub.vc) {
            return Err(ServiceError::Remote {
                code: ErrorCode::Replay,
                message: "verification challenge unknown or already used".into(),
            });
        }
        let want = submission_digest(&self.cfg.k2, &sub.vc, sub.bits, &sub.tokens);
        if want != sub.digest {
            return Err(ServiceError::Remote {
                code: ErrorCode::VerificationFailed,
                message: "upload does not hash to the submitted digest".into(),
            });
        }
        let body = UploadPayload::body(&sub.vc, sub.bits, &sub.tokens);
        let mut payload = auth::origin_tag(&self.cfg.origin_key, MessageType::Upload, &body).to_vec();
        payload.extend(body);
        let acks = self.fss.each_ref().map(|s| {
            s.handle(WireFrame::new(MessageType::Upload, frame.query_id, payload.clone()))
                .expect(MessageType::Ack)
                .and_then(|f| Ack::decode(&f.payload))
        });
        let [a0, a1] = acks;
        let (a0, a1) = (a0?, a1?);
        if a0 != a1 {
            return Err(ServiceError::Unexpected(format!("servers disagree on upload: {a0:?} vs {a1:?}")));
        }
        Ok(WireFrame::new(MessageType::Ack, frame.query_id, a0.encode()))
    }

    fn dispatch(&self, frame: &WireFrame) -> Result<WireFrame> {
        match frame.message_type {
            MessageType::ChallengeRequest => self.on_challenge(frame),
            MessageType::Submission => self.on_submission(frame),
            MessageType::EpochRoll => {
                let mut r = Reader::new(&frame.payload);
                let tag: [u8; 32] = r.array()?;
                let body = r.rest();
                auth::check_origin(&self.cfg.origin_key, MessageType::EpochRoll, body, &tag)?;
                let now = Reader::new(body).u64()?;
                let rep = self.roll(now)?;
                Ok(WireFrame::new(MessageType::RollReport, frame.query_id, rep.encode()))
            }
            MessageType::Health => {
                let h = Health {
                    role: Role::Verifier,
                    party: None,
                    epoch: *self.epoch.lock().unwrap(),
                    stored: self.outstanding.lock().unwrap().len() as u64,
                };
                Ok(WireFrame::new(MessageType::HealthReply, frame.query_id, h.encode()))
            }
            other => Err(ServiceError::Unexpected(format!("{other:?} is not served here"))),
        }
    }
}

impl Service for VerificationServer {
    fn handle(&self, frame: WireFrame) -> WireFrame {
        let reply_type = match frame.message_type {
            MessageType::Submission | MessageType::ChallengeRequest => MessageType::Reject,
            _ => MessageType::Error,
        };
        self.dispatch(&frame)
            .unwrap_or_else(|e| crate::failure_frame(reply_type, frame.query_id, &e))
    }
}
