//! Server-side token store: the set X, partitioned by the epoch of arrival.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use psica_core::{DomainPoint, Error};

use crate::error::{Result, ServiceError};
use crate::messages::{Reader, RollReport};

/// Tokens of the last `window` epochs. Writers go through `&mut self`; readers
/// take an immutable [`snapshot`](EpochStore::snapshot) and keep it for the
/// whole evaluation.
#[derive(Clone, Debug)]
pub struct EpochStore {
    window: u64,
    bits: u8,
    current: u64,
    epochs: BTreeMap<u64, Vec<DomainPoint>>,
    seen: HashMap<[u8; 16], u64>,
    snapshot: Arc<Vec<DomainPoint>>,
}

impl EpochStore {
    pub fn new(window: u64, bits: u8, start_epoch: u64) -> Result<Self> {
        if window == 0 {
            return Err(ServiceError::Config("retention window must be at least one epoch".into()));
        }
        DomainPoint::new(0, bits)?;
        Ok(EpochStore {
            window,
            bits,
            current: start_epoch,
            epochs: BTreeMap::new(),
            seen: HashMap::new(),
            snapshot: Arc::new(Vec::new()),
        })
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    pub fn domain_bits(&self) -> u8 {
        self.bits
    }

    pub fn current_epoch(&self) -> u64 {
        self.current
    }

    /// Stored tokens, counting repeats.
    pub fn len(&self) -> usize {
        self.epochs.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn epochs(&self) -> impl Iterator<Item = (u64, &[DomainPoint])> {
        self.epochs.iter().map(|(e, v)| (*e, v.as_slice()))
    }

    pub fn tokens_in(&self, epoch: u64) -> &[DomainPoint] {
        self.epochs.get(&epoch).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The distinct stored tokens, sorted. Uploads may repeat a token; X is a set.
    pub fn snapshot(&self) -> Arc<Vec<DomainPoint>> {
        Arc::clone(&self.snapshot)
    }

    /// Adds `tokens` under the current epoch. A repeated `upload_id` is a
    /// no-op and reports zero insertions.
    pub fn insert(&mut self, upload_id: [u8; 16], tokens: &[DomainPoint]) -> Result<u64> {
        if let Some(t) = tokens.iter().find(|t| t.bits() != self.bits) {
            return Err(Error::DomainMismatch {
                expected: self.bits,
                got: t.bits(),
            }
            .into());
        }
        if self.seen.contains_key(&upload_id) {
            return Ok(0);
        }
        self.seen.insert(upload_id, self.current);
        if !tokens.is_empty() {
            self.epochs.entry(self.current).or_default().extend_from_slice(tokens);
            self.rebuild();
        }
        Ok(tokens.len() as u64)
    }

    /// Moves the clock to `now` and drops epochs at or before `now - window`.
    /// Rolling to the current epoch again changes nothing.
    pub fn roll(&mut self, now: u64) -> Result<RollReport> {
        if now < self.current {
            return Err(Error::EpochRegression {
                current: self.current,
                requested: now,
            }
            .into());
        }
        let mut report = RollReport {
            epoch: now,
            ..RollReport::default()
        };
        if now == self.current {
            return Ok(report);
        }
        self.current = now;
        let oldest_kept = self.oldest_kept();
        let kept = self.epochs.split_off(&oldest_kept);
        for (_, toks) in std::mem::replace(&mut self.epochs, kept) {
            report.expired_epochs += 1;
            report.expired_tokens += toks.len() as u64;
        }
        self.seen.retain(|_, e| *e >= oldest_kept);
        if report.expired_tokens > 0 {
            self.rebuild();
        }
        Ok(report)
    }

    pub fn oldest_kept(&self) -> u64 {
        (self.current + 1).saturating_sub(self.window)
    }

    fn rebuild(&mut self) {
        let mut all: Vec<DomainPoint> = self.epochs.values().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        self.snapshot = Arc::new(all);
    }

    /// `bits u8 | current u64 | epochs u32 | per epoch: epoch u64, count u32, values`.
    /// Upload ids are not part of the image.
    pub fn to_bytes(&self) -> Vec<u8> {
        let width = DomainPoint::byte_len(self.bits);
        let mut out = Vec::with_capacity(13 + self.epochs.len() * 12 + self.len() * width);
        out.push(self.bits);
        out.extend_from_slice(&self.current.to_le_bytes());
        out.extend_from_slice(&(self.epochs.len() as u32).to_le_bytes());
        for (e, toks) in &self.epochs {
            out.extend_from_slice(&e.to_le_bytes());
            out.extend_from_slice(&(toks.len() as u32).to_le_bytes());
            for t in toks {
                t.encode_value(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(window: u64, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let bits = r.u8()?;
        let current = r.u64()?;
        let mut store = EpochStore::new(window, bits, current)?;
        let width = DomainPoint::byte_len(bits);
        for _ in 0..r.u32()? {
            let e = r.u64()?;
            if e > current || store.epochs.contains_key(&e) {
                return Err(ServiceError::Wire(format!("epoch {e} out of order in store image")));
            }
            let count = r.u32()? as usize;
            let raw = r.take(count * width)?;
            let toks = raw
                .chunks(width)
                .map(|c| DomainPoint::decode_value(c, bits))
                .collect::<psica_core::Result<Vec<_>>>()?;
            store.epochs.insert(e, toks);
        }
        r.finish()?;
        store.rebuild();
        Ok(store)
    }
}
