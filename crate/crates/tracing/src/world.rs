//! Scenario driver state: the deployment, the devices, and the clock.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use psica_core::bucketing::BucketConfig;
use psica_core::{DpfParams, Party};
use psica_service::client;
use psica_service::config::Secrets;
use psica_service::fss::roll_payload;
use psica_service::messages::{Ack, RollReport};
use psica_service::{
    FssConfig, FssServer, KeyServer, KeyServerConfig, MessageType, Service, VerificationServer, VerifierConfig, WireFrame,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::device::{Device, Scorer, Signal, StrengthScorer, TraceMode, TraceOutcome};
use crate::enclave::{Enclave, Platform};
use crate::error::{Result, TracingError};
use crate::suite::{ContextCell, RawToken};

/// Handles on the four services, in-process or remote.
#[derive(Clone)]
pub struct Endpoints {
    pub fss: [Arc<dyn Service>; 2],
    pub verifier: Arc<dyn Service>,
    pub keyserver: Arc<dyn Service>,
}

impl Endpoints {
    /// All four services in this process.
    pub fn local(secrets: &Secrets, params: &DpfParams, window: u64, bucket: Option<BucketConfig>) -> Result<Self> {
        let make = |party: Party| -> Result<Arc<dyn Service>> {
            let cfg = FssConfig {
                party,
                window,
                params: params.clone(),
                bucket: bucket.clone(),
                start_epoch: 0,
                shared_seed: secrets.shared_seed,
                origin_key: secrets.origin_key,
                channel_key: (party == Party::One).then_some(secrets.channel_key),
            };
            Ok(Arc::new(FssServer::new(cfg)?))
        };
        let fss = [make(Party::Zero)?, make(Party::One)?];
        let verifier = Arc::new(VerificationServer::new(
            VerifierConfig {
                k2: secrets.k2,
                hcp_key: secrets.hcp_key,
                origin_key: secrets.origin_key,
            },
            fss.clone(),
        ));
        let keyserver = Arc::new(KeyServer::new(KeyServerConfig {
            vendor_key: secrets.vendor_key,
            measurements: vec![secrets.measurement],
            k1: secrets.k1,
            k2: secrets.k2,
        }));
        Ok(Endpoints {
            fss,
            verifier,
            keyserver,
        })
    }
}

#[derive(Clone, Debug)]
pub struct WorldConfig {
    pub params: DpfParams,
    pub window: u64,
    pub mode: TraceMode,
    pub seed: u64,
}

struct Presence {
    device: String,
    token: RawToken,
    strength: Option<u64>,
}

/// Devices plus the operator roles: health authority (issues challenges) and
/// clock (rolls epochs).
pub struct World {
    endpoints: Endpoints,
    secrets: Secrets,
    cfg: WorldConfig,
    devices: BTreeMap<String, Device>,
    present: HashMap<ContextCell, Vec<Presence>>,
    day: u64,
    rng: ChaCha20Rng,
    scorer: Box<dyn Scorer + Send>,
}

impl World {
    pub fn new(endpoints: Endpoints, secrets: Secrets, cfg: WorldConfig) -> Self {
        World {
            endpoints,
            secrets,
            rng: ChaCha20Rng::seed_from_u64(cfg.seed),
            cfg,
            devices: BTreeMap::new(),
            present: HashMap::new(),
            day: 0,
            scorer: Box::new(StrengthScorer),
        }
    }

    pub fn with_scorer(mut self, scorer: Box<dyn Scorer + Send>) -> Self {
        self.scorer = scorer;
        self
    }

    pub fn day(&self) -> u64 {
        self.day
    }

    pub fn device(&self, id: &str) -> Result<&Device> {
        self.devices.get(id).ok_or_else(|| TracingError::UnknownDevice(id.to_string()))
    }

    /// Creates and provisions a device through the key server.
    pub fn add_device(&mut self, id: &str) -> Result<()> {
        let platform = Platform {
            vendor_key: self.secrets.vendor_key,
            measurement: self.secrets.measurement,
        };
        let device_id: [u8; 16] = Sha256::digest(id.as_bytes())[..16].try_into().unwrap();
        let enclave = Enclave::provision(&*self.endpoints.keyserver, &platform, device_id, &mut self.rng)?;
        let mut d = Device::new(id, self.cfg.params.clone(), self.cfg.window);
        d.install(enclave);
        self.devices.insert(id.to_string(), d);
        Ok(())
    }

    /// Moves the clock forward, expiring device and server state.
    pub fn advance_to(&mut self, day: u64) -> Result<Option<RollReport>> {
        if day < self.day {
            return Err(psica_core::Error::EpochRegression {
                current: self.day,
                requested: day,
            }
            .into());
        }
        if day == self.day {
            return Ok(None);
        }
        let payload = roll_payload(&self.secrets.origin_key, day);
        let reply = self
            .endpoints
            .verifier
            .handle(WireFrame::new(MessageType::EpochRoll, [0; 16], payload))
            .expect(MessageType::RollReport)?;
        self.day = day;
        self.present.retain(|cell, _| cell.day() >= day);
        for d in self.devices.values_mut() {
            d.expire(day);
        }
        Ok(Some(RollReport::decode(&reply.payload)?))
    }

    /// `id` appears at `(location, day, slot)`: it broadcasts once, and it and
    /// every device already there hear each other. Returns what it broadcast.
    pub fn at(&mut self, id: &str, day: u64, slot: u64, location: &str, strength: Option<u64>) -> Result<RawToken> {
        self.advance_to(day)?;
        let cell = ContextCell::at(location, day, slot)?;
        let token = self
            .devices
            .get_mut(id)
            .ok_or_else(|| TracingError::UnknownDevice(id.to_string()))?
            .broadcast(&cell, &mut self.rng)?;
        let others = self.present.entry(cell.clone()).or_default();
        for other in others.iter() {
            if other.device == id {
                continue;
            }
            let theirs = Signal {
                cell: cell.clone(),
                strength: other.strength,
            };
            let mine = Signal {
                cell: cell.clone(),
                strength,
            };
            let scorer = &*self.scorer;
            self.devices.get_mut(&other.device).unwrap().receive(&token, &theirs, scorer)?;
            self.devices.get_mut(id).unwrap().receive(&other.token, &mine, scorer)?;
        }
        others.push(Presence {
            device: id.to_string(),
            token,
            strength,
        });
        Ok(token)
    }

    /// Health authority issues a challenge; the device uploads `U` through the verifier.
    pub fn infect(&mut self, id: &str) -> Result<Ack> {
        let vc = client::request_challenge(&*self.endpoints.verifier, &self.secrets.hcp_key, &mut self.rng)?;
        self.device(id)?.upload(&*self.endpoints.verifier, vc)
    }

    pub fn trace(&mut self, id: &str) -> Result<TraceOutcome> {
        let fss = [&*self.endpoints.fss[0], &*self.endpoints.fss[1]];
        let day = self.day;
        let d = self
            .devices
            .get_mut(id)
            .ok_or_else(|| TracingError::UnknownDevice(id.to_string()))?;
        d.trace(fss, day, &self.cfg.mode, &mut self.rng)
    }
}
