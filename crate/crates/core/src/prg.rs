//! Length-doubling PRG from fixed-key AES-128 in Matyas–Meyer–Oseas mode,
//! with a per-thread expansion counter so cost claims can be asserted.

use std::cell::Cell;
use std::sync::OnceLock;

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;

pub const SEED_LEN: usize = 16;
/// Seeds handled by one [`expand_towards`] call.
pub const BATCH: usize = 32;
pub type Seed = [u8; SEED_LEN];

// Arbitrary public constants (hex digits of pi).
const EXPAND_KEY: [u8; 16] = [
    0x24, 0x3f, 0x6a, 0x88, 0x85, 0xa3, 0x08, 0xd3, 0x13, 0x19, 0x8a, 0x2e, 0x03, 0x70, 0x73, 0x44,
];
const CONVERT_KEY: [u8; 16] = [
    0xa4, 0x09, 0x38, 0x22, 0x29, 0x9f, 0x31, 0xd0, 0x08, 0x2e, 0xfa, 0x98, 0xec, 0x4e, 0x6c, 0x89,
];
const RIGHT_TWEAK: u8 = 0xff;

thread_local! {
    static EXPANSIONS: Cell<u64> = const { Cell::new(0) };
    static CONVERSIONS: Cell<u64> = const { Cell::new(0) };
}

fn expand_cipher() -> &'static Aes128 {
    static CIPHER: OnceLock<Aes128> = OnceLock::new();
    CIPHER.get_or_init(|| Aes128::new(GenericArray::from_slice(&EXPAND_KEY)))
}

fn convert_cipher() -> &'static Aes128 {
    static CIPHER: OnceLock<Aes128> = OnceLock::new();
    CIPHER.get_or_init(|| Aes128::new(GenericArray::from_slice(&CONVERT_KEY)))
}

/// Children of one tree node. The control bit is the low bit of the last seed
/// byte, which is cleared in the returned seeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Expansion {
    pub seeds: [Seed; 2],
    pub bits: [bool; 2],
}

/// One seed expansion: two fixed-key AES calls, `AES(x) ^ x` on `s` and on a tweak of `s`.
pub fn expand(seed: &Seed) -> Expansion {
    EXPANSIONS.with(|c| c.set(c.get() + 1));
    let mut right_in = *seed;
    right_in[0] ^= RIGHT_TWEAK;
    let mut blocks = [
        GenericArray::clone_from_slice(seed),
        GenericArray::clone_from_slice(&right_in),
    ];
    expand_cipher().encrypt_blocks(&mut blocks);
    let mut out = [[0u8; SEED_LEN]; 2];
    let mut bits = [false; 2];
    for (i, input) in [seed, &right_in].into_iter().enumerate() {
        for j in 0..SEED_LEN {
            out[i][j] = blocks[i][j] ^ input[j];
        }
        bits[i] = out[i][SEED_LEN - 1] & 1 == 1;
        out[i][SEED_LEN - 1] &= 0xfe;
    }
    Expansion { seeds: out, bits }
}

/// Replaces each `seeds[i]` by its child in direction `dirs[i]` and writes
/// that child's control bit, matching [`expand`] on the chosen side. Each
/// seed counts as one expansion; the other child is never computed. At most
/// [`BATCH`] seeds per call.
pub fn expand_towards(seeds: &mut [Seed], dirs: &[bool], bits: &mut [bool]) {
    assert!(seeds.len() <= BATCH && seeds.len() == dirs.len() && seeds.len() == bits.len());
    EXPANSIONS.with(|c| c.set(c.get() + seeds.len() as u64));
    for (s, &d) in seeds.iter_mut().zip(dirs) {
        if d {
            s[0] ^= RIGHT_TWEAK;
        }
    }
    let mut buf = [GenericArray::default(); BATCH];
    let blocks = &mut buf[..seeds.len()];
    for (b, s) in blocks.iter_mut().zip(seeds.iter()) {
        b.copy_from_slice(s);
    }
    expand_cipher().encrypt_blocks(blocks);
    for ((s, block), bit) in seeds.iter_mut().zip(blocks.iter()).zip(bits.iter_mut()) {
        for j in 0..SEED_LEN {
            s[j] ^= block[j];
        }
        *bit = s[SEED_LEN - 1] & 1 == 1;
        s[SEED_LEN - 1] &= 0xfe;
    }
}

/// Pseudorandom 64-bit words derived from a leaf seed, for payload groups with
/// more than one factor.
pub fn convert_words(seed: &Seed, count: usize) -> Vec<u64> {
    CONVERSIONS.with(|c| c.set(c.get() + 1));
    let cipher = convert_cipher();
    let mut words = Vec::with_capacity(count + 1);
    let mut ctr = 0u32;
    while words.len() < count {
        let mut input = *seed;
        for (b, c) in input.iter_mut().zip(ctr.to_le_bytes()) {
            *b ^= c;
        }
        let mut block = GenericArray::clone_from_slice(&input);
        cipher.encrypt_block(&mut block);
        for j in 0..SEED_LEN {
            block[j] ^= input[j];
        }
        words.push(u64::from_le_bytes(block[..8].try_into().unwrap()));
        words.push(u64::from_le_bytes(block[8..].try_into().unwrap()));
        ctr += 1;
    }
    words.truncate(count);
    words
}

/// Read-out of the calling thread's PRG counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PrgCounter {
    pub expansions: u64,
    pub conversions: u64,
}

impl PrgCounter {
    pub fn current() -> Self {
        PrgCounter {
            expansions: EXPANSIONS.with(Cell::get),
            conversions: CONVERSIONS.with(Cell::get),
        }
    }

    pub fn reset() {
        EXPANSIONS.with(|c| c.set(0));
        CONVERSIONS.with(|c| c.set(0));
    }

    pub fn since(&self) -> PrgCounter {
        let now = PrgCounter::current();
        PrgCounter {
            expansions: now.expansions - self.expansions,
            conversions: now.conversions - self.conversions,
        }
    }

    /// Rewinds this thread's totals to an earlier reading.
    pub(crate) fn restore(to: PrgCounter) {
        EXPANSIONS.with(|c| c.set(to.expansions));
        CONVERSIONS.with(|c| c.set(to.conversions));
    }

    /// Adds work done on other threads to this thread's totals.
    pub(crate) fn credit(work: PrgCounter) {
        EXPANSIONS.with(|c| c.set(c.get() + work.expansions));
        CONVERSIONS.with(|c| c.set(c.get() + work.conversions));
    }
}

impl std::ops::Add for PrgCounter {
    type Output = PrgCounter;

    fn add(self, rhs: Self) -> Self {
        PrgCounter {
            expansions: self.expansions + rhs.expansions,
            conversions: self.conversions + rhs.conversions,
        }
    }
}
