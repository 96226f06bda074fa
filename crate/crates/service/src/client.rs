//! Client-side drivers for the service endpoints.

use psica_core::psi::{self, AnswerShare, QueryId, QueryShare};
use psica_core::{DomainPoint, DpfKey, Group, GroupElement};
use rand::{CryptoRng, RngCore};

use crate::auth::{self, Key32};
use crate::error::{Result, ServiceError};
use crate::messages::{self, Ack, IncrementalPayload, QueryMode, QueryPayload, SubmissionPayload};
use crate::verifier;
use crate::wire::{MessageType, WireFrame};
use crate::Service;

/// The second server reached through the first. Frames are sealed under the
/// client's channel key with the far server, so the near one only sees ciphertext.
pub struct Relayed<S> {
    via: S,
    key: Key32,
}

impl<S: Service> Relayed<S> {
    pub fn new(via: S, key: Key32) -> Self {
        Relayed { via, key }
    }
}

impl<S: Service> Service for Relayed<S> {
    fn handle(&self, frame: WireFrame) -> WireFrame {
        let id = frame.query_id;
        let outer = auth::seal_relay(&self.key, &frame, false, &mut rand::thread_rng());
        let reply = self.via.handle(outer);
        match reply.message_type {
            MessageType::Relay => auth::open_relay(&self.key, &reply, true)
                .unwrap_or_else(|e| crate::failure_frame(MessageType::Error, id, &e)),
            _ => reply,
        }
    }
}

fn answer(group: &Group, query_id: QueryId, reply: WireFrame) -> Result<AnswerShare> {
    let f = reply.expect(MessageType::Answer)?;
    if f.query_id != query_id.0 {
        return Err(ServiceError::Unexpected("answer carries a different query id".into()));
    }
    Ok(AnswerShare {
        query_id,
        value: messages::decode_answer(group, &f.payload)?,
    })
}

pub fn query_frame(share: &QueryShare, mode: QueryMode) -> WireFrame {
    let payload = QueryPayload {
        epoch: share.epoch,
        mode,
        keys: share.keys.clone(),
    };
    WireFrame::new(MessageType::Query, share.query_id.0, payload.encode())
}

/// One round: a query frame to each server, one answer back from each.
pub fn run_query(servers: [&dyn Service; 2], shares: &[QueryShare; 2], mode: QueryMode, group: &Group) -> Result<GroupElement> {
    let qid = shares[0].query_id;
    if shares[1].query_id != qid {
        return Err(ServiceError::Unexpected("shares of one query disagree on the id".into()));
    }
    let a0 = answer(group, qid, servers[0].handle(query_frame(&shares[0], mode)))?;
    let a1 = answer(group, qid, servers[1].handle(query_frame(&shares[1], mode)))?;
    Ok(psi::client_reconstruct(&a0, &a1, group)?)
}

/// Sends this epoch's new keys for a standing session and reconstructs the
/// window total.
pub fn run_incremental(
    servers: [&dyn Service; 2],
    session: [u8; 16],
    epoch: u64,
    keys: [Vec<DpfKey>; 2],
    query_id: QueryId,
    group: &Group,
) -> Result<GroupElement> {
    let [k0, k1] = keys;
    let mut answers = Vec::with_capacity(2);
    for (server, keys) in servers.into_iter().zip([k0, k1]) {
        let payload = IncrementalPayload { session, epoch, keys }.encode();
        let reply = server.handle(WireFrame::new(MessageType::IncrementalQuery, query_id.0, payload));
        answers.push(answer(group, query_id, reply)?);
    }
    Ok(psi::client_reconstruct(&answers[0], &answers[1], group)?)
}

/// Health-authority step: obtain a single-use verification challenge.
pub fn request_challenge<R: RngCore + CryptoRng>(verifier_svc: &dyn Service, hcp_key: &Key32, rng: &mut R) -> Result<[u8; 16]> {
    let mut id = [0u8; 16];
    rng.fill_bytes(&mut id);
    let reply = verifier_svc
        .handle(WireFrame::new(MessageType::ChallengeRequest, id, verifier::challenge_request(hcp_key, &id)))
        .expect(MessageType::Challenge)?;
    reply
        .payload
        .as_slice()
        .try_into()
        .map_err(|_| ServiceError::Wire("challenge must be 16 bytes".into()))
}

/// Submits `tokens` with the digest the device computed under `K2`.
pub fn submit(verifier_svc: &dyn Service, vc: [u8; 16], digest: [u8; 32], bits: u8, tokens: Vec<DomainPoint>) -> Result<Ack> {
    let payload = SubmissionPayload { vc, digest, bits, tokens }.encode();
    let reply = verifier_svc
        .handle(WireFrame::new(MessageType::Submission, vc, payload))
        .expect(MessageType::Ack)?;
    Ack::decode(&reply.payload)
}
