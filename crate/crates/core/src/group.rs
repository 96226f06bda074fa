//! Finite Abelian payload groups `Z_{M1} x ... x Z_{Mj}`.

use std::fmt;

use rand::Rng;
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Residue vector; one entry per factor of the owning [`Group`].
pub type Residues = SmallVec<[u64; 2]>;

/// Description of a product of cyclic groups.
///
/// The default group is `Z_{2^16}`, wide enough for integer risk weights whose
/// total stays below `2^16`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Group {
    moduli: SmallVec<[u64; 2]>,
}

impl Default for Group {
    fn default() -> Self {
        Group::cyclic(1 << 16).expect("2^16 is a valid modulus")
    }
}

impl Group {
    pub const MAX_FACTORS: usize = 16;

    pub fn new(moduli: &[u64]) -> Result<Self> {
        if moduli.is_empty() || moduli.len() > Self::MAX_FACTORS {
            return Err(Error::Config(format!(
                "group needs between 1 and {} factors, got {}",
                Self::MAX_FACTORS,
                moduli.len()
            )));
        }
        if let Some(m) = moduli.iter().find(|&&m| m < 2) {
            return Err(Error::Config(format!("modulus {m} is not at least 2")));
        }
        Ok(Group {
            moduli: moduli.iter().copied().collect(),
        })
    }

    pub fn cyclic(modulus: u64) -> Result<Self> {
        Self::new(&[modulus])
    }

    pub fn moduli(&self) -> &[u64] {
        &self.moduli
    }

    pub fn factors(&self) -> usize {
        self.moduli.len()
    }

    pub fn zero(&self) -> GroupElement {
        GroupElement {
            values: smallvec::smallvec![0; self.moduli.len()],
        }
    }

    /// Builds an element, rejecting residues outside `[0, M_i)`.
    pub fn element(&self, values: &[u64]) -> Result<GroupElement> {
        let e = GroupElement {
            values: values.iter().copied().collect(),
        };
        self.check(&e)?;
        Ok(e)
    }

    /// Builds an element by reducing each value modulo its factor.
    pub fn reduce(&self, values: &[u64]) -> Result<GroupElement> {
        if values.len() != self.factors() {
            return Err(self.mismatch(values.len()));
        }
        Ok(GroupElement {
            values: values
                .iter()
                .zip(&self.moduli)
                .map(|(v, m)| v % m)
                .collect(),
        })
    }

    pub fn contains(&self, e: &GroupElement) -> bool {
        e.values.len() == self.moduli.len()
            && e.values.iter().zip(&self.moduli).all(|(v, m)| v < m)
    }

    pub fn check(&self, e: &GroupElement) -> Result<()> {
        if e.values.len() != self.moduli.len() {
            return Err(self.mismatch(e.values.len()));
        }
        if !self.contains(e) {
            return Err(Error::InvalidInput(format!(
                "element {e} is not in group {self}"
            )));
        }
        Ok(())
    }

    fn mismatch(&self, got: usize) -> Error {
        Error::GroupMismatch(format!(
            "expected {} components for {self}, got {got}",
            self.factors()
        ))
    }

    pub fn add(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        let mut out = a.clone();
        self.add_assign(&mut out, b);
        out
    }

    pub fn add_assign(&self, acc: &mut GroupElement, b: &GroupElement) {
        debug_assert_eq!(acc.values.len(), self.moduli.len());
        debug_assert_eq!(b.values.len(), self.moduli.len());
        for ((x, y), m) in acc.values.iter_mut().zip(&b.values).zip(&self.moduli) {
            *x = add_mod(*x, *y, *m);
        }
    }

    pub fn neg(&self, a: &GroupElement) -> GroupElement {
        GroupElement {
            values: a
                .values
                .iter()
                .zip(&self.moduli)
                .map(|(v, m)| if *v == 0 { 0 } else { m - v })
                .collect(),
        }
    }

    pub fn sub(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        self.add(a, &self.neg(b))
    }

    pub fn sum<'a>(&self, items: impl IntoIterator<Item = &'a GroupElement>) -> GroupElement {
        let mut acc = self.zero();
        for e in items {
            self.add_assign(&mut acc, e);
        }
        acc
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> GroupElement {
        GroupElement {
            values: self.moduli.iter().map(|&m| rng.gen_range(0..m)).collect(),
        }
    }

    /// Bytes needed to encode one residue of factor `i` (little-endian, minimal width).
    pub fn residue_width(&self, i: usize) -> usize {
        let max = self.moduli[i] - 1;
        (((64 - max.leading_zeros()) as usize) + 7) / 8
    }

    /// Encoded length of one element; depends only on the group.
    pub fn element_len(&self) -> usize {
        (0..self.factors()).map(|i| self.residue_width(i).max(1)).sum()
    }

    pub fn encode_element(&self, e: &GroupElement, out: &mut Vec<u8>) {
        for (i, v) in e.values.iter().enumerate() {
            let w = self.residue_width(i).max(1);
            out.extend_from_slice(&v.to_le_bytes()[..w]);
        }
    }

    pub fn decode_element(&self, bytes: &[u8]) -> Result<(GroupElement, usize)> {
        let mut pos = 0;
        let mut values = Residues::new();
        for i in 0..self.factors() {
            let w = self.residue_width(i).max(1);
            let chunk = bytes
                .get(pos..pos + w)
                .ok_or_else(|| Error::Codec("truncated group element".into()))?;
            let mut buf = [0u8; 8];
            buf[..w].copy_from_slice(chunk);
            values.push(u64::from_le_bytes(buf));
            pos += w;
        }
        let e = GroupElement { values };
        if !self.contains(&e) {
            return Err(Error::Codec(format!("residue out of range in {e}")));
        }
        Ok((e, pos))
    }

    /// Descriptor bytes: factor count followed by little-endian 64-bit moduli.
    pub fn encode_descriptor(&self, out: &mut Vec<u8>) {
        out.push(self.moduli.len() as u8);
        for m in &self.moduli {
            out.extend_from_slice(&m.to_le_bytes());
        }
    }

    pub fn decode_descriptor(bytes: &[u8]) -> Result<(Self, usize)> {
        let count = *bytes
            .first()
            .ok_or_else(|| Error::Codec("missing group descriptor".into()))?
            as usize;
        let mut moduli = Vec::with_capacity(count);
        for i in 0..count {
            let start = 1 + 8 * i;
            let chunk = bytes
                .get(start..start + 8)
                .ok_or_else(|| Error::Codec("truncated group descriptor".into()))?;
            moduli.push(u64::from_le_bytes(chunk.try_into().unwrap()));
        }
        let group = Group::new(&moduli).map_err(|e| Error::Codec(e.to_string()))?;
        Ok((group, 1 + 8 * count))
    }

    pub fn descriptor_len(&self) -> usize {
        1 + 8 * self.moduli.len()
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, m) in self.moduli.iter().enumerate() {
            if i > 0 {
                write!(f, " x ")?;
            }
            write!(f, "Z_{m}")?;
        }
        Ok(())
    }
}

#[inline]
fn add_mod(a: u64, b: u64, m: u64) -> u64 {
    let (s, carry) = a.overflowing_add(b);
    if carry || s >= m {
        s.wrapping_sub(m)
    } else {
        s
    }
}

/// An element of a [`Group`]. Arithmetic goes through the group.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement {
    values: Residues,
}

impl GroupElement {
    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    /// Single-factor convenience accessor.
    pub fn scalar(&self) -> u64 {
        self.values[0]
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.values.len() == 1 {
            return write!(f, "{}", self.values[0]);
        }
        write!(f, "(")?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}
