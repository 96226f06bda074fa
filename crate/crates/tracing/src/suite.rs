//! Token derivation. A true token is `H(F(K1, nonce | location | time))`
//! with `F` = HMAC-SHA256 and `H` = SHA-256, cut to the DPF domain width.

use psica_core::DomainPoint;
use psica_service::auth::{hmac_sha256, Key32};
use sha2::{Digest, Sha256};

use crate::error::{Result, TracingError};

pub const NONCE_LEN: usize = 16;
pub const SLOTS_PER_DAY: u64 = 144;
pub const DEFAULT_TOKEN_BITS: u8 = 74;

/// What a device broadcasts: the nonce alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RawToken {
    pub nonce: [u8; NONCE_LEN],
}

/// Where and when a token was sent or heard. Never leaves the device.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ContextCell {
    /// Opaque grid-cell id.
    pub location: String,
    /// Ten-minute slots since day 0.
    pub time: u64,
}

impl ContextCell {
    pub fn at(location: &str, day: u64, slot: u64) -> Result<Self> {
        if slot >= SLOTS_PER_DAY {
            return Err(TracingError::Core(psica_core::Error::InvalidInput(format!(
                "slot {slot} outside 0..{SLOTS_PER_DAY}"
            ))));
        }
        Ok(ContextCell {
            location: location.to_string(),
            time: day * SLOTS_PER_DAY + slot,
        })
    }

    pub fn day(&self) -> u64 {
        self.time / SLOTS_PER_DAY
    }
}

pub fn prf_input(nonce: &[u8; NONCE_LEN], cell: &ContextCell) -> Vec<u8> {
    let loc = cell.location.as_bytes();
    let mut out = Vec::with_capacity(NONCE_LEN + 2 + loc.len() + 8);
    out.extend_from_slice(nonce);
    out.extend_from_slice(&(loc.len() as u16).to_le_bytes());
    out.extend_from_slice(loc);
    out.extend_from_slice(&cell.time.to_le_bytes());
    out
}

pub fn true_token(k1: &Key32, nonce: &[u8; NONCE_LEN], cell: &ContextCell, bits: u8) -> Result<DomainPoint> {
    let f = hmac_sha256(k1, &[&prf_input(nonce, cell)]);
    let h = Sha256::digest(f);
    Ok(DomainPoint::truncate_bytes(&h[..16], bits)?)
}
