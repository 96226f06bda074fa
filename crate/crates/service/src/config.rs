//! Deployment configuration. Public settings live in a TOML file; secrets in
//! a separate TOML file whose path comes from `PSICA_SHARED_SEED_FILE`.

use std::path::Path;
use std::sync::Arc;

use psica_core::bucketing::BucketConfig;
use psica_core::{DpfParams, Group, Party};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::auth::Key32;
use crate::error::{Result, ServiceError};
use crate::fss::{FssConfig, FssServer};
use crate::keyserver::{KeyServer, KeyServerConfig};
use crate::net::Remote;
use crate::verifier::{VerificationServer, VerifierConfig};
use crate::Service;

pub const SECRETS_ENV: &str = "PSICA_SHARED_SEED_FILE";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoleName {
    Fss0,
    Fss1,
    Verifier,
    Keyserver,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketSection {
    pub m: usize,
    pub b: usize,
    pub c: usize,
    #[serde(default)]
    pub rerandomize: bool,
    /// 64 hex digits.
    pub hash_seed: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub role: RoleName,
    pub listen: String,
    #[serde(default = "default_window")]
    pub window: u64,
    #[serde(default = "default_bits")]
    pub domain_bits: u8,
    /// Moduli of the payload group, one per factor.
    #[serde(default = "default_group")]
    pub group: Vec<u64>,
    #[serde(default)]
    pub start_epoch: u64,
    pub bucket: Option<BucketSection>,
    /// fss0 only: where to pass relayed frames.
    pub peer: Option<String>,
    /// verifier only: the two FSS servers, party 0 first.
    pub fss: Option<[String; 2]>,
}

fn default_window() -> u64 {
    14
}
fn default_bits() -> u8 {
    74
}
fn default_group() -> Vec<u64> {
    vec![1 << 16]
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ServiceConfig = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.params()?;
        cfg.bucket_config()?;
        match cfg.role {
            RoleName::Verifier if cfg.fss.is_none() => {
                return Err(ServiceError::Config("verifier needs `fss = [addr0, addr1]`".into()))
            }
            _ => {}
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn params(&self) -> Result<DpfParams> {
        Ok(DpfParams::new(self.domain_bits, Group::new(&self.group)?)?)
    }

    pub fn bucket_config(&self) -> Result<Option<BucketConfig>> {
        self.bucket
            .as_ref()
            .map(|b| Ok(BucketConfig::new(b.m, b.b, b.c, b.rerandomize, parse_key(&b.hash_seed)?)?))
            .transpose()
    }
}

fn parse_key(s: &str) -> Result<Key32> {
    let bytes = hex::decode(s.trim()).map_err(|e| ServiceError::Config(format!("bad hex key: {e}")))?;
    bytes
        .try_into()
        .map_err(|_| ServiceError::Config("keys must be 32 bytes (64 hex digits)".into()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SecretsFile {
    shared_seed: String,
    origin_key: String,
    channel_key: String,
    k1: String,
    k2: String,
    hcp_key: String,
    vendor_key: String,
    measurement: String,
}

/// Deployment secrets. Each role reads only the fields it needs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Secrets {
    /// Blinding seed common to both FSS servers.
    pub shared_seed: Key32,
    /// Verification server to FSS servers.
    pub origin_key: Key32,
    /// Client to the second FSS server, for relayed traffic.
    pub channel_key: Key32,
    pub k1: Key32,
    pub k2: Key32,
    /// Health authority to verification server.
    pub hcp_key: Key32,
    /// Stand-in for the enclave vendor's attestation root.
    pub vendor_key: Key32,
    /// Allowed enclave measurement.
    pub measurement: Key32,
}

impl Secrets {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut k = || {
            let mut b = [0u8; 32];
            rng.fill_bytes(&mut b);
            b
        };
        Secrets {
            shared_seed: k(),
            origin_key: k(),
            channel_key: k(),
            k1: k(),
            k2: k(),
            hcp_key: k(),
            vendor_key: k(),
            measurement: k(),
        }
    }

    pub fn to_toml(&self) -> String {
        let f = SecretsFile {
            shared_seed: hex::encode(self.shared_seed),
            origin_key: hex::encode(self.origin_key),
            channel_key: hex::encode(self.channel_key),
            k1: hex::encode(self.k1),
            k2: hex::encode(self.k2),
            hcp_key: hex::encode(self.hcp_key),
            vendor_key: hex::encode(self.vendor_key),
            measurement: hex::encode(self.measurement),
        };
        toml::to_string(&f).expect("plain string table serializes")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let f: SecretsFile = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(Secrets {
            shared_seed: parse_key(&f.shared_seed)?,
            origin_key: parse_key(&f.origin_key)?,
            channel_key: parse_key(&f.channel_key)?,
            k1: parse_key(&f.k1)?,
            k2: parse_key(&f.k2)?,
            hcp_key: parse_key(&f.hcp_key)?,
            vendor_key: parse_key(&f.vendor_key)?,
            measurement: parse_key(&f.measurement)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Reads the file named by `PSICA_SHARED_SEED_FILE`.
    pub fn from_env() -> Result<Self> {
        let path = std::env::var_os(SECRETS_ENV)
            .ok_or_else(|| ServiceError::Config(format!("{SECRETS_ENV} is not set")))?;
        Self::load(Path::new(&path))
    }
}

pub fn fss_config(cfg: &ServiceConfig, secrets: &Secrets, party: Party) -> Result<FssConfig> {
    Ok(FssConfig {
        party,
        window: cfg.window,
        params: cfg.params()?,
        bucket: cfg.bucket_config()?,
        start_epoch: cfg.start_epoch,
        shared_seed: secrets.shared_seed,
        origin_key: secrets.origin_key,
        channel_key: (party == Party::One).then_some(secrets.channel_key),
    })
}

/// The service a config describes, wired to its remote peers.
pub fn build(cfg: &ServiceConfig, secrets: &Secrets) -> Result<Arc<dyn Service>> {
    Ok(match cfg.role {
        RoleName::Fss0 | RoleName::Fss1 => {
            let party = if cfg.role == RoleName::Fss0 { Party::Zero } else { Party::One };
            let mut server = FssServer::new(fss_config(cfg, secrets, party)?)?;
            if let (Party::Zero, Some(peer)) = (party, &cfg.peer) {
                server = server.with_peer(Arc::new(Remote::new(peer.as_str())?));
            }
            Arc::new(server)
        }
        RoleName::Verifier => {
            let [a0, a1] = cfg.fss.as_ref().expect("checked at parse time");
            let fss: [Arc<dyn Service>; 2] = [Arc::new(Remote::new(a0.as_str())?), Arc::new(Remote::new(a1.as_str())?)];
            Arc::new(VerificationServer::new(
                VerifierConfig {
                    k2: secrets.k2,
                    hcp_key: secrets.hcp_key,
                    origin_key: secrets.origin_key,
                },
                fss,
            ))
        }
        RoleName::Keyserver => Arc::new(KeyServer::new(KeyServerConfig {
            vendor_key: secrets.vendor_key,
            measurements: vec![secrets.measurement],
            k1: secrets.k1,
            k2: secrets.k2,
        })),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn defaults() {
        let c = ServiceConfig::parse("role = \"fss0\"\nlisten = \"127.0.0.1:0\"\n").unwrap();
        assert_eq!((c.window, c.domain_bits, c.group.clone()), (14, 74, vec![65536]));
        assert!(c.bucket_config().unwrap().is_none());
    }

    #[test]
    fn bad_configs() {
        for text in [
            "role = \"fss2\"\nlisten = \"x\"",
            "role = \"fss0\"",
            "role = \"fss0\"\nlisten = \"x\"\ndomain_bits = 0",
            "role = \"verifier\"\nlisten = \"x\"",
            "role = \"fss0\"\nlisten = \"x\"\n[bucket]\nm = 0\nb = 2\nc = 1\nhash_seed = \"00\"",
            "role = \"fss0\"\nlisten = \"x\"\nbogus = 1",
        ] {
            assert!(ServiceConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn secrets_round_trip() {
        let s = Secrets::generate(&mut ChaCha20Rng::seed_from_u64(3));
        assert_eq!(Secrets::parse(&s.to_toml()).unwrap(), s);
    }
}
