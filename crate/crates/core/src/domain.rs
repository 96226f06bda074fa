use std::fmt;

use crate::error::{Error, Result};

pub const MAX_DOMAIN_BITS: u8 = 128;

/// A fixed-length bit string of 1 to 128 bits, stored right-aligned in a `u128`.
///
/// Bit 0 in tree order is the most significant of the `bits` bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DomainPoint {
    value: u128,
    bits: u8,
}

impl DomainPoint {
    pub fn new(value: u128, bits: u8) -> Result<Self> {
        check_bits(bits)?;
        if bits < 128 && value >> bits != 0 {
            return Err(Error::InvalidInput(format!(
                "value {value:#x} does not fit in {bits} bits"
            )));
        }
        Ok(DomainPoint { value, bits })
    }

    /// Keeps the low-order `bits` bits of a raw token.
    pub fn truncate(raw: u128, bits: u8) -> Result<Self> {
        check_bits(bits)?;
        Ok(DomainPoint {
            value: raw & mask(bits),
            bits,
        })
    }

    /// Interprets up to 16 little-endian bytes as a raw token and truncates it.
    pub fn truncate_bytes(raw: &[u8], bits: u8) -> Result<Self> {
        let mut buf = [0u8; 16];
        let n = raw.len().min(16);
        buf[..n].copy_from_slice(&raw[..n]);
        Self::truncate(u128::from_le_bytes(buf), bits)
    }

    pub fn value(&self) -> u128 {
        self.value
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    /// Bit at tree level `level` (0 = most significant).
    #[inline]
    pub fn bit(&self, level: usize) -> bool {
        debug_assert!(level < self.bits as usize);
        (self.value >> (self.bits as usize - 1 - level)) & 1 == 1
    }

    pub fn byte_len(bits: u8) -> usize {
        (bits as usize + 7) / 8
    }

    /// Value bytes only (the bit length is carried by context).
    pub fn encode_value(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.value.to_le_bytes()[..Self::byte_len(self.bits)]);
    }

    pub fn decode_value(bytes: &[u8], bits: u8) -> Result<Self> {
        let len = Self::byte_len(bits);
        let chunk = bytes
            .get(..len)
            .ok_or_else(|| Error::Codec("truncated domain point".into()))?;
        let mut buf = [0u8; 16];
        buf[..len].copy_from_slice(chunk);
        Self::new(u128::from_le_bytes(buf), bits).map_err(|e| Error::Codec(e.to_string()))
    }
}

impl fmt::Display for DomainPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = (self.bits as usize + 3) / 4;
        write!(f, "{:0width$x}/{}", self.value, self.bits, width = digits)
    }
}

fn mask(bits: u8) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    }
}

pub(crate) fn check_bits(bits: u8) -> Result<()> {
    if bits == 0 || bits > MAX_DOMAIN_BITS {
        return Err(Error::Config(format!(
            "domain bit-length must be in 1..=128, got {bits}"
        )));
    }
    Ok(())
}
