//! Two-party distributed point function over an Abelian payload group.
//!
//! GGM-style binary tree with one correction word per level and a final
//! output correction that maps the leaf seed into the group. Each party's key
//! holds a root seed, `k'` correction words and the output correction, so a
//! key is about 17 bytes per domain bit.
//!
//! Generation costs two seed expansions per level (one per party); evaluation
//! costs one per level.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::domain::{check_bits, DomainPoint};
use crate::error::{Error, Result};
use crate::group::{Group, GroupElement};
use crate::prg::{self, Seed, SEED_LEN};

/// Only 128-bit security (AES-128 seeds) is supported.
pub const SECURITY_BITS: u16 = 128;
pub const KEY_MAGIC: u8 = 0xd5;
pub const KEY_VERSION: u8 = 1;
/// `eval_all` refuses domains larger than `2^MAX_EVAL_ALL_BITS`.
pub const MAX_EVAL_ALL_BITS: u8 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Party {
    Zero,
    One,
}

impl Party {
    pub fn index(self) -> usize {
        match self {
            Party::Zero => 0,
            Party::One => 1,
        }
    }

    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            0 => Ok(Party::Zero),
            1 => Ok(Party::One),
            _ => Err(Error::Codec(format!("party bit must be 0 or 1, got {i}"))),
        }
    }

    fn initial_bit(self) -> bool {
        self == Party::One
    }
}

/// Domain length plus payload group; everything a key's shape depends on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DpfParams {
    pub domain_bits: u8,
    pub group: Group,
}

impl DpfParams {
    pub fn new(domain_bits: u8, group: Group) -> Result<Self> {
        check_bits(domain_bits)?;
        Ok(DpfParams { domain_bits, group })
    }

    /// Serialized key length; a function of `(λ, k', G)` only.
    pub fn key_len(&self) -> usize {
        4 + 1
            + self.group.descriptor_len()
            + 1
            + SEED_LEN
            + (SEED_LEN + 1) * self.domain_bits as usize
            + 8 * self.group.factors()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorrectionWord {
    pub seed: Seed,
    pub bits: [bool; 2],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DpfKey {
    party: Party,
    domain_bits: u8,
    group: Group,
    root_seed: Seed,
    corrections: Vec<CorrectionWord>,
    output_correction: GroupElement,
}

/// Generates the two keys for `f_{alpha,beta}`. Deterministic in `seed`.
pub fn gen(
    params: &DpfParams,
    security_bits: u16,
    alpha: &DomainPoint,
    beta: &GroupElement,
    seed: [u8; 32],
) -> Result<(DpfKey, DpfKey)> {
    if security_bits != SECURITY_BITS {
        return Err(Error::Config(format!(
            "unsupported security parameter {security_bits}; only {SECURITY_BITS} is available"
        )));
    }
    if alpha.bits() != params.domain_bits {
        return Err(Error::DomainMismatch {
            expected: params.domain_bits,
            got: alpha.bits(),
        });
    }
    params.group.check(beta)?;

    let mut rng = ChaCha20Rng::from_seed(seed);
    let mut roots = [[0u8; SEED_LEN]; 2];
    rng.fill_bytes(&mut roots[0]);
    rng.fill_bytes(&mut roots[1]);

    let mut seeds = roots;
    let mut bits = [false, true];
    let n = params.domain_bits as usize;
    let mut corrections = Vec::with_capacity(n);
    for level in 0..n {
        let keep = alpha.bit(level) as usize;
        let lose = 1 - keep;
        let e0 = prg::expand(&seeds[0]);
        let e1 = prg::expand(&seeds[1]);
        let cw_seed = xor(&e0.seeds[lose], &e1.seeds[lose]);
        let alpha_bit = keep == 1;
        // After correction the kept child's bits differ between parties, the lost child's agree.
        let cw_bits = [
            e0.bits[0] ^ e1.bits[0] ^ alpha_bit ^ true,
            e0.bits[1] ^ e1.bits[1] ^ alpha_bit,
        ];
        let cw = CorrectionWord {
            seed: cw_seed,
            bits: cw_bits,
        };
        for (b, e) in [e0, e1].into_iter().enumerate() {
            let mut s = e.seeds[keep];
            let mut t = e.bits[keep];
            if bits[b] {
                s = xor(&s, &cw.seed);
                t ^= cw.bits[keep];
            }
            seeds[b] = s;
            bits[b] = t;
        }
        corrections.push(cw);
    }

    let group = &params.group;
    let c0 = convert(group, &seeds[0]);
    let c1 = convert(group, &seeds[1]);
    let mut out = group.add(&group.sub(beta, &c0), &c1);
    if bits[1] {
        out = group.neg(&out);
    }

    let make = |party: Party| DpfKey {
        party,
        domain_bits: params.domain_bits,
        group: group.clone(),
        root_seed: roots[party.index()],
        corrections: corrections.clone(),
        output_correction: out.clone(),
    };
    Ok((make(Party::Zero), make(Party::One)))
}

impl DpfKey {
    pub fn party(&self) -> Party {
        self.party
    }

    pub fn domain_bits(&self) -> u8 {
        self.domain_bits
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn corrections(&self) -> &[CorrectionWord] {
        &self.corrections
    }

    pub fn params(&self) -> DpfParams {
        DpfParams {
            domain_bits: self.domain_bits,
            group: self.group.clone(),
        }
    }

    /// This party's output share at `x`.
    pub fn eval(&self, x: &DomainPoint) -> Result<GroupElement> {
        if x.bits() != self.domain_bits {
            return Err(Error::DomainMismatch {
                expected: self.domain_bits,
                got: x.bits(),
            });
        }
        let mut s = [self.root_seed];
        let mut t = self.party.initial_bit();
        for (level, cw) in self.corrections.iter().enumerate() {
            let dir = x.bit(level);
            let mut next_t = [false];
            prg::expand_towards(&mut s, &[dir], &mut next_t);
            if t {
                s[0] = xor(&s[0], &cw.seed);
                next_t[0] ^= cw.bits[dir as usize];
            }
            t = next_t[0];
        }
        Ok(self.finish(&s[0], t))
    }

    /// `sum_x Eval(x)`, walking up to [`prg::BATCH`] paths side by side. Costs
    /// exactly `k'` expansions per point, like [`DpfKey::eval`].
    pub fn eval_sum(&self, xs: &[DomainPoint]) -> Result<GroupElement> {
        if let Some(x) = xs.iter().find(|x| x.bits() != self.domain_bits) {
            return Err(Error::DomainMismatch {
                expected: self.domain_bits,
                got: x.bits(),
            });
        }
        let g = &self.group;
        let mut acc = g.zero();
        let mut seeds = [[0u8; SEED_LEN]; prg::BATCH];
        let mut ts = [false; prg::BATCH];
        let mut dirs = [false; prg::BATCH];
        let mut bits = [false; prg::BATCH];
        for chunk in xs.chunks(prg::BATCH) {
            let n = chunk.len();
            seeds[..n].fill(self.root_seed);
            ts[..n].fill(self.party.initial_bit());
            for (level, cw) in self.corrections.iter().enumerate() {
                for (d, x) in dirs.iter_mut().zip(chunk) {
                    *d = x.bit(level);
                }
                prg::expand_towards(&mut seeds[..n], &dirs[..n], &mut bits[..n]);
                for i in 0..n {
                    if ts[i] {
                        seeds[i] = xor(&seeds[i], &cw.seed);
                        bits[i] ^= cw.bits[dirs[i] as usize];
                    }
                    ts[i] = bits[i];
                }
            }
            for i in 0..n {
                g.add_assign(&mut acc, &self.finish(&seeds[i], ts[i]));
            }
        }
        Ok(acc)
    }

    /// Shares at every domain point, in index order, by walking the tree once.
    pub fn eval_all(&self) -> Result<Vec<GroupElement>> {
        if self.domain_bits > MAX_EVAL_ALL_BITS {
            return Err(Error::InvalidInput(format!(
                "full-domain evaluation is limited to {MAX_EVAL_ALL_BITS} bits, key has {}",
                self.domain_bits
            )));
        }
        let mut frontier = vec![(self.root_seed, self.party.initial_bit())];
        for cw in &self.corrections {
            let mut next = Vec::with_capacity(frontier.len() * 2);
            for (s, t) in &frontier {
                let e = prg::expand(s);
                for dir in 0..2 {
                    let mut cs = e.seeds[dir];
                    let mut ct = e.bits[dir];
                    if *t {
                        cs = xor(&cs, &cw.seed);
                        ct ^= cw.bits[dir];
                    }
                    next.push((cs, ct));
                }
            }
            frontier = next;
        }
        Ok(frontier.iter().map(|(s, t)| self.finish(s, *t)).collect())
    }

    fn finish(&self, seed: &Seed, t: bool) -> GroupElement {
        let g = &self.group;
        let mut y = convert(g, seed);
        if t {
            g.add_assign(&mut y, &self.output_correction);
        }
        match self.party {
            Party::Zero => y,
            Party::One => g.neg(&y),
        }
    }

    pub fn encoded_len(&self) -> usize {
        self.params().key_len()
    }

    /// Byte layout (little-endian):
    /// `magic u8 | version u8 | λ u16 | k' u8 | group descriptor | party u8 |
    /// root seed [16] | k' x (seed [16], bits u8) | output correction k x u64`.
    pub fn encode(&self, out: &mut Vec<u8>) {
        out.reserve(self.encoded_len());
        out.push(KEY_MAGIC);
        out.push(KEY_VERSION);
        out.extend_from_slice(&SECURITY_BITS.to_le_bytes());
        out.push(self.domain_bits);
        self.group.encode_descriptor(out);
        out.push(self.party.index() as u8);
        out.extend_from_slice(&self.root_seed);
        for cw in &self.corrections {
            out.extend_from_slice(&cw.seed);
            out.push(cw.bits[0] as u8 | (cw.bits[1] as u8) << 1);
        }
        for v in self.output_correction.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode(&mut out);
        out
    }

    /// Parses one key and returns it with the number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut r = Reader { bytes, pos: 0 };
        if r.u8()? != KEY_MAGIC {
            return Err(Error::Codec("bad key magic".into()));
        }
        let version = r.u8()?;
        if version != KEY_VERSION {
            return Err(Error::Codec(format!("unsupported key version {version}")));
        }
        let lambda = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
        if lambda != SECURITY_BITS {
            return Err(Error::Codec(format!("unsupported security parameter {lambda}")));
        }
        let domain_bits = r.u8()?;
        check_bits(domain_bits).map_err(|e| Error::Codec(e.to_string()))?;
        let (group, used) = Group::decode_descriptor(&bytes[r.pos..])?;
        r.pos += used;
        let party = Party::from_index(r.u8()?)?;
        let root_seed: Seed = r.take(SEED_LEN)?.try_into().unwrap();
        let mut corrections = Vec::with_capacity(domain_bits as usize);
        for _ in 0..domain_bits {
            let seed: Seed = r.take(SEED_LEN)?.try_into().unwrap();
            let b = r.u8()?;
            if b > 3 {
                return Err(Error::Codec("control bit byte out of range".into()));
            }
            corrections.push(CorrectionWord {
                seed,
                bits: [b & 1 == 1, b & 2 == 2],
            });
        }
        let mut values = Vec::with_capacity(group.factors());
        for _ in 0..group.factors() {
            values.push(u64::from_le_bytes(r.take(8)?.try_into().unwrap()));
        }
        let output_correction = group
            .element(&values)
            .map_err(|e| Error::Codec(e.to_string()))?;
        Ok((
            DpfKey {
                party,
                domain_bits,
                group,
                root_seed,
                corrections,
                output_correction,
            },
            r.pos,
        ))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (key, used) = Self::decode(bytes)?;
        if used != bytes.len() {
            return Err(Error::Codec(format!(
                "{} trailing bytes after key",
                bytes.len() - used
            )));
        }
        Ok(key)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Codec("truncated key".into()))?;
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

/// Leaf seed to group element: low-order bytes reduced per factor.
fn convert(group: &Group, seed: &Seed) -> GroupElement {
    let moduli = group.moduli();
    if moduli.len() == 1 {
        let w = u64::from_le_bytes(seed[..8].try_into().unwrap());
        return group.reduce(&[w]).expect("one factor");
    }
    let words = prg::convert_words(seed, moduli.len());
    group.reduce(&words).expect("factor count matches")
}

#[inline]
fn xor(a: &Seed, b: &Seed) -> Seed {
    let mut out = [0u8; SEED_LEN];
    for i in 0..SEED_LEN {
        out[i] = a[i] ^ b[i];
    }
    out
}
