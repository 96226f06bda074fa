//! One of the two FSS servers.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, RwLock};

use psica_core::bucketing::{self, BucketConfig};
use psica_core::psi::{self, QueryId, QueryShare};
use psica_core::{DpfKey, DpfParams, Error, GroupElement, Party};
use sha2::{Digest, Sha256};

use crate::auth::{self, Key32};
use crate::error::{Result, ServiceError};
use crate::messages::{self, Ack, Health, IncrementalPayload, QueryMode, QueryPayload, Reader, Role, UploadPayload};
use crate::store::EpochStore;
use crate::wire::{ErrorCode, MessageType, WireFrame};
use crate::Service;

#[derive(Clone, Debug)]
pub struct FssConfig {
    pub party: Party,
    pub window: u64,
    pub params: DpfParams,
    pub bucket: Option<BucketConfig>,
    pub start_epoch: u64,
    /// Common to both servers; never leaves them.
    pub shared_seed: Key32,
    /// Authenticates the verification server.
    pub origin_key: Key32,
    /// Client channel key for relayed traffic. Only the far server holds it.
    pub channel_key: Option<Key32>,
}

/// Per-epoch blinding seed, so a seed compromise is confined to one epoch.
pub fn epoch_seed(shared_seed: &Key32, epoch: u64) -> Key32 {
    let mut h = Sha256::new();
    h.update(b"psica blind epoch");
    h.update(shared_seed);
    h.update(epoch.to_le_bytes());
    h.finalize().into()
}

pub struct FssServer {
    cfg: FssConfig,
    store: RwLock<EpochStore>,
    sessions: Mutex<HashMap<[u8; 16], BTreeMap<u64, Vec<DpfKey>>>>,
    peer: Option<Arc<dyn Service>>,
}

impl FssServer {
    pub fn new(cfg: FssConfig) -> Result<Self> {
        if let Some(b) = &cfg.bucket {
            b.validate()?;
        }
        let store = EpochStore::new(cfg.window, cfg.params.domain_bits, cfg.start_epoch)?;
        Ok(FssServer {
            cfg,
            store: RwLock::new(store),
            sessions: Mutex::new(HashMap::new()),
            peer: None,
        })
    }

    /// Relayed frames are passed on to `peer` unopened.
    pub fn with_peer(mut self, peer: Arc<dyn Service>) -> Self {
        self.peer = Some(peer);
        self
    }

    pub fn config(&self) -> &FssConfig {
        &self.cfg
    }

    pub fn current_epoch(&self) -> u64 {
        self.store.read().unwrap().current_epoch()
    }

    pub fn store_bytes(&self) -> Vec<u8> {
        self.store.read().unwrap().to_bytes()
    }

    pub fn stored_tokens(&self) -> usize {
        self.store.read().unwrap().len()
    }

    pub fn stored_sessions(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    fn blind(&self, epoch: u64, query_id: [u8; 16]) -> GroupElement {
        psi::party_blind(
            &epoch_seed(&self.cfg.shared_seed, epoch),
            QueryId(query_id),
            &self.cfg.params.group,
            self.cfg.party,
        )
    }

    fn check_keys(&self, keys: &[DpfKey]) -> Result<()> {
        for k in keys {
            if k.domain_bits() != self.cfg.params.domain_bits {
                return Err(Error::DomainMismatch {
                    expected: self.cfg.params.domain_bits,
                    got: k.domain_bits(),
                }
                .into());
            }
            if k.group() != &self.cfg.params.group {
                return Err(Error::GroupMismatch(format!(
                    "key over {} but server runs {}",
                    k.group(),
                    self.cfg.params.group
                ))
                .into());
            }
            if k.party() != self.cfg.party {
                return Err(Error::Protocol(format!("key for {:?} sent to {:?}", k.party(), self.cfg.party)).into());
            }
        }
        Ok(())
    }

    fn check_epoch(&self, epoch: u64, current: u64) -> Result<()> {
        if epoch != current {
            return Err(ServiceError::Remote {
                code: ErrorCode::Epoch,
                message: format!("query for epoch {epoch}, server is at {current}"),
            });
        }
        Ok(())
    }

    fn answer(&self, query_id: [u8; 16], value: &GroupElement) -> WireFrame {
        WireFrame::new(
            MessageType::Answer,
            query_id,
            messages::encode_answer(&self.cfg.params.group, value),
        )
    }

    fn on_query(&self, frame: &WireFrame) -> Result<WireFrame> {
        let q = QueryPayload::decode(&frame.payload)?;
        self.check_keys(&q.keys)?;
        let (xs, current) = {
            let s = self.store.read().unwrap();
            (s.snapshot(), s.current_epoch())
        };
        self.check_epoch(q.epoch, current)?;
        let blind = self.blind(q.epoch, frame.query_id);
        let share = QueryShare {
            query_id: QueryId(frame.query_id),
            epoch: q.epoch,
            party: self.cfg.party,
            keys: q.keys,
        };
        let ans = match q.mode {
            QueryMode::Flat => psi::server_eval(&share, &xs, &blind)?,
            QueryMode::Bucketed => {
                let cfg = self
                    .cfg
                    .bucket
                    .as_ref()
                    .ok_or_else(|| ServiceError::Config("bucketed query but no bucket configuration".into()))?;
                bucketing::server_eval_bucketed(&share, &xs, cfg, &blind)?
            }
        };
        Ok(self.answer(frame.query_id, &ans.value))
    }

    /// Stores this epoch's keys under the session, then answers for every key
    /// still inside the window against the current token snapshot.
    fn on_incremental(&self, frame: &WireFrame) -> Result<WireFrame> {
        let q = IncrementalPayload::decode(&frame.payload)?;
        self.check_keys(&q.keys)?;
        let (xs, current, oldest) = {
            let s = self.store.read().unwrap();
            (s.snapshot(), s.current_epoch(), s.oldest_kept())
        };
        self.check_epoch(q.epoch, current)?;
        let keys: Vec<DpfKey> = {
            let mut sessions = self.sessions.lock().unwrap();
            let sess = sessions.entry(q.session).or_default();
            if let Some((&last, _)) = sess.last_key_value() {
                if last >= q.epoch {
                    return Err(Error::EpochRegression {
                        current: last,
                        requested: q.epoch,
                    }
                    .into());
                }
            }
            sess.retain(|&e, _| e >= oldest);
            sess.insert(q.epoch, q.keys);
            sess.values().flatten().cloned().collect()
        };
        let share = QueryShare {
            query_id: QueryId(frame.query_id),
            epoch: q.epoch,
            party: self.cfg.party,
            keys,
        };
        let ans = psi::server_eval(&share, &xs, &self.blind(q.epoch, frame.query_id))?;
        Ok(self.answer(frame.query_id, &ans.value))
    }

    fn on_upload(&self, frame: &WireFrame) -> Result<WireFrame> {
        let (up, covered) = UploadPayload::decode(&frame.payload)?;
        auth::check_origin(&self.cfg.origin_key, MessageType::Upload, covered, &up.tag)?;
        if up.bits != self.cfg.params.domain_bits {
            return Err(Error::DomainMismatch {
                expected: self.cfg.params.domain_bits,
                got: up.bits,
            }
            .into());
        }
        let mut s = self.store.write().unwrap();
        let inserted = s.insert(up.upload_id, &up.tokens)?;
        let ack = Ack {
            epoch: s.current_epoch(),
            inserted,
        };
        Ok(WireFrame::new(MessageType::Ack, frame.query_id, ack.encode()))
    }

    fn on_roll(&self, frame: &WireFrame) -> Result<WireFrame> {
        let mut r = Reader::new(&frame.payload);
        let tag: [u8; 32] = r.array()?;
        let body = r.rest();
        auth::check_origin(&self.cfg.origin_key, MessageType::EpochRoll, body, &tag)?;
        let mut r = Reader::new(body);
        let now = r.u64()?;
        r.finish()?;
        let mut report = self.store.write().unwrap().roll(now)?;
        if report.expired_epochs > 0 {
            let oldest = self.store.read().unwrap().oldest_kept();
            let mut sessions = self.sessions.lock().unwrap();
            for sess in sessions.values_mut() {
                let before = sess.len();
                sess.retain(|&e, _| e >= oldest);
                report.expired_key_sets += (before - sess.len()) as u32;
            }
            sessions.retain(|_, s| !s.is_empty());
        }
        Ok(WireFrame::new(MessageType::RollReport, frame.query_id, report.encode()))
    }

    fn on_relay(&self, frame: &WireFrame) -> Result<WireFrame> {
        if let Some(peer) = &self.peer {
            return Ok(peer.handle(frame.clone()));
        }
        let key = self
            .cfg
            .channel_key
            .ok_or_else(|| ServiceError::Config("relay frame but no channel key or peer".into()))?;
        let inner = auth::open_relay(&key, frame, false)?;
        let reply = self.handle(inner);
        Ok(auth::seal_relay(&key, &reply, true, &mut rand::thread_rng()))
    }

    fn dispatch(&self, frame: &WireFrame) -> Result<WireFrame> {
        match frame.message_type {
            MessageType::Query => self.on_query(frame),
            MessageType::IncrementalQuery => self.on_incremental(frame),
            MessageType::Upload => self.on_upload(frame),
            MessageType::EpochRoll => self.on_roll(frame),
            MessageType::Relay => self.on_relay(frame),
            MessageType::Health => {
                let s = self.store.read().unwrap();
                let h = Health {
                    role: Role::Fss,
                    party: Some(self.cfg.party.index() as u8),
                    epoch: s.current_epoch(),
                    stored: s.len() as u64,
                };
                Ok(WireFrame::new(MessageType::HealthReply, frame.query_id, h.encode()))
            }
            other => Err(ServiceError::Unexpected(format!("{other:?} is not served here"))),
        }
    }
}

impl Service for FssServer {
    fn handle(&self, frame: WireFrame) -> WireFrame {
        let reply_type = match frame.message_type {
            MessageType::Upload | MessageType::EpochRoll => MessageType::Reject,
            _ => MessageType::Error,
        };
        self.dispatch(&frame)
            .unwrap_or_else(|e| crate::failure_frame(reply_type, frame.query_id, &e))
    }
}

/// Body of an `EpochRoll` frame signed with the origin key.
pub fn roll_payload(origin_key: &Key32, now: u64) -> Vec<u8> {
    let body = now.to_le_bytes();
    let mut out = auth::origin_tag(origin_key, MessageType::EpochRoll, &body).to_vec();
    out.extend_from_slice(&body);
    out
}
