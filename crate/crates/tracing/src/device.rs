//! A phone: broadcasts nonces, hears others', and keeps the hashed sets `U`
//! (sent) and `Y` (heard, with risk weights) for the retention window.

use psica_core::bucketing::{self, BucketConfig, Stash};
use psica_core::psi::{self, WeightedToken};
use psica_core::{DomainPoint, DpfParams, Group, GroupElement};
use psica_service::client;
use psica_service::messages::{Ack, QueryMode};
use psica_service::Service;
use rand::{CryptoRng, Rng, RngCore};

use crate::enclave::Enclave;
use crate::error::{Result, TracingError};
use crate::suite::{ContextCell, RawToken, NONCE_LEN};

/// What the receiver observed alongside a token.
#[derive(Clone, Debug)]
pub struct Signal {
    pub cell: ContextCell,
    /// Exposure strength, e.g. from signal attenuation and duration.
    pub strength: Option<u64>,
}

pub trait Scorer {
    fn score(&self, signal: &Signal, group: &Group) -> GroupElement;
}

/// Every contact counts 1, so a trace returns the plain match count.
#[derive(Clone, Copy, Debug, Default)]
pub struct UnitScorer;

impl Scorer for UnitScorer {
    fn score(&self, _: &Signal, group: &Group) -> GroupElement {
        group.reduce(&[1]).expect("one residue per factor")
    }
}

/// Uses the observed strength, or 1 when none was recorded.
#[derive(Clone, Copy, Debug, Default)]
pub struct StrengthScorer;

impl Scorer for StrengthScorer {
    fn score(&self, signal: &Signal, group: &Group) -> GroupElement {
        group.reduce(&[signal.strength.unwrap_or(1)]).expect("one residue per factor")
    }
}

impl<F: Fn(&Signal) -> u64> Scorer for F {
    fn score(&self, signal: &Signal, group: &Group) -> GroupElement {
        group.reduce(&[self(signal)]).expect("one residue per factor")
    }
}

#[derive(Clone, Debug)]
pub enum TraceMode {
    Flat,
    /// Keys are laid out in `m * b` bucket slots, so the query size does not
    /// depend on `|Y|`. Tokens that do not fit are counted as deferred and
    /// left out of that trace's total.
    Bucketed(BucketConfig),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceOutcome {
    pub total: GroupElement,
    pub queried: usize,
    pub deferred: usize,
}

#[derive(Debug)]
pub struct Device {
    id: String,
    enclave: Option<Enclave>,
    params: DpfParams,
    window: u64,
    sent: Vec<(u64, DomainPoint)>,
    heard: Vec<(u64, WeightedToken)>,
}

impl Device {
    pub fn new(id: &str, params: DpfParams, window: u64) -> Self {
        Device {
            id: id.to_string(),
            enclave: None,
            params,
            window,
            sent: Vec::new(),
            heard: Vec::new(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn install(&mut self, enclave: Enclave) {
        self.enclave = Some(enclave);
    }

    fn enclave(&self) -> Result<&Enclave> {
        self.enclave.as_ref().ok_or_else(|| TracingError::Unprovisioned(self.id.clone()))
    }

    /// Sends a fresh nonce and keeps its hash in `U`.
    pub fn broadcast<R: RngCore + CryptoRng>(&mut self, cell: &ContextCell, rng: &mut R) -> Result<RawToken> {
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let u = self.enclave()?.true_token(&nonce, cell, self.params.domain_bits)?;
        self.sent.push((cell.day(), u));
        self.expire(cell.day());
        Ok(RawToken { nonce })
    }

    /// Hashes a heard token under the receiver's own cell and keeps it in `Y`.
    pub fn receive(&mut self, token: &RawToken, signal: &Signal, scorer: &dyn Scorer) -> Result<()> {
        let y = self.enclave()?.true_token(&token.nonce, &signal.cell, self.params.domain_bits)?;
        let w = scorer.score(signal, &self.params.group);
        self.heard.push((signal.cell.day(), WeightedToken::new(y, w)));
        self.expire(signal.cell.day());
        Ok(())
    }

    /// Drops everything received or sent more than `window` days before `today`.
    pub fn expire(&mut self, today: u64) {
        let live = |d: u64| d + self.window > today;
        self.sent.retain(|(d, _)| live(*d));
        self.heard.retain(|(d, _)| live(*d));
    }

    pub fn sent(&self) -> Vec<DomainPoint> {
        self.sent.iter().map(|(_, u)| *u).collect()
    }

    pub fn heard(&self) -> Vec<WeightedToken> {
        self.heard.iter().map(|(_, y)| y.clone()).collect()
    }

    /// Submits `U` against a challenge obtained from the health authority.
    pub fn upload(&self, verifier: &dyn Service, vc: [u8; 16]) -> Result<Ack> {
        let bits = self.params.domain_bits;
        let u = self.sent();
        let digest = self.enclave()?.upload_digest(&vc, bits, &u);
        Ok(client::submit(verifier, vc, digest, bits, u)?)
    }

    /// Total risk over `Y`, in one round with both servers. With no contacts
    /// in the window the servers are not contacted.
    pub fn trace<R: Rng>(&mut self, fss: [&dyn Service; 2], day: u64, mode: &TraceMode, rng: &mut R) -> Result<TraceOutcome> {
        self.enclave()?;
        self.expire(day);
        let group = &self.params.group;
        match mode {
            TraceMode::Flat => {
                let inputs = self.heard();
                if inputs.is_empty() {
                    return Ok(TraceOutcome {
                        total: group.zero(),
                        queried: 0,
                        deferred: 0,
                    });
                }
                let (mut a, mut b) = psi::client_gen_query(&inputs, &self.params, rng.gen())?;
                a.epoch = day;
                b.epoch = day;
                let total = client::run_query(fss, &[a, b], QueryMode::Flat, group)?;
                Ok(TraceOutcome {
                    total,
                    queried: inputs.len(),
                    deferred: 0,
                })
            }
            TraceMode::Bucketed(cfg) => {
                let (plan, left) = bucketing::assign_day(&self.heard(), Stash::new(), cfg, day)?;
                let (a, b) = bucketing::plan_to_query(&plan, &self.params, rng.gen())?;
                let total = client::run_query(fss, &[a, b], QueryMode::Bucketed, group)?;
                Ok(TraceOutcome {
                    total,
                    queried: plan.real_count(),
                    deferred: left.len(),
                })
            }
        }
    }
}
