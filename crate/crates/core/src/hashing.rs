//! Hashing primitives. Every key is reduced once to a [`Key128`]; all bins,
//! fingerprints and per-trial hashes are derived from it with a purpose tag
//! and a seed, never from the key bytes again.

use xxhash_rust::xxh3::xxh3_128_with_seed;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Key128 {
    pub hi: u64,
    pub lo: u64,
}

impl Key128 {
    pub const fn new(hi: u64, lo: u64) -> Self {
        Self { hi, lo }
    }
}

/// Purpose tags. Streams with different tags are independent.
pub mod tag {
    pub const BIN: u8 = 1;
    pub const FINGERPRINT: u8 = 2;
    pub const PACK: u8 = 3;
    pub const BUCKET: u8 = 4;
    pub const PLACE: u8 = 5;
    pub const SPLIT: u8 = 6;
    pub const MERGE: u8 = 7;
    pub const RETRIEVAL: u8 = 8;
    pub const FALLBACK: u8 = 9;
    pub const BITINDEX: u8 = 10;
    pub const LAYER: u8 = 11;
}

pub fn hash_key(key: &[u8], global_seed: u64) -> Key128 {
    let h = xxh3_128_with_seed(key, global_seed);
    Key128 { hi: (h >> 64) as u64, lo: h as u64 }
}

#[inline]
pub fn fmix64(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^ (x >> 33)
}

#[inline]
fn mum(a: u64, b: u64) -> u64 {
    let p = a as u128 * b as u128;
    (p as u64) ^ ((p >> 64) as u64)
}

const TAG_MIX: u64 = 0x9e37_79b9_7f4a_7c15;
const SEED_MIX: u64 = 0xd6e8_feb8_6659_fd93;
const HI_MIX: u64 = 0xa076_1d64_78bd_642f;

/// A derived stream for a fixed (tag, seed). Building one costs a finalizer;
/// applying it costs one 128-bit multiply and a finalizer, which matters in
/// brute-force seed searches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Deriver {
    salt: u64,
}

impl Deriver {
    #[inline]
    pub fn new(purpose: u8, seed: u64) -> Self {
        let salt = fmix64(seed.wrapping_mul(SEED_MIX) ^ (purpose as u64 + 1).wrapping_mul(TAG_MIX));
        Self { salt }
    }

    #[inline]
    pub fn derive(&self, h: Key128) -> u64 {
        let a = h.lo ^ self.salt;
        let b = h.hi ^ self.salt.rotate_left(29) ^ HI_MIX;
        fmix64(mum(a, b) ^ self.salt)
    }

    #[inline]
    pub fn range(&self, h: Key128, m: u64) -> u64 {
        fastrange(self.derive(h), m)
    }

    #[inline]
    pub fn unit(&self, h: Key128) -> f64 {
        unit_from_u64(self.derive(h))
    }
}

#[inline]
pub fn derive(h: Key128, purpose: u8, seed: u64) -> u64 {
    Deriver::new(purpose, seed).derive(h)
}

/// Multiply-high range reduction: floor(v·m / 2^64).
#[inline]
pub fn fastrange(v: u64, m: u64) -> u64 {
    ((v as u128 * m as u128) >> 64) as u64
}

#[inline]
pub fn unit_from_u64(v: u64) -> f64 {
    (v as f64 + 1.0) * (1.0 / 18_446_744_073_709_551_616.0)
}

pub fn to_range(h: Key128, purpose: u8, seed: u64, m: u64) -> u64 {
    debug_assert!(m >= 1);
    fastrange(derive(h, purpose, seed), m)
}

/// Value in (0, 1]: (v + 1) / 2^64 for the derived 64-bit v.
pub fn to_unit(h: Key128, purpose: u8, seed: u64) -> f64 {
    unit_from_u64(derive(h, purpose, seed))
}

/// Key with its bit-index mixed in, used to store multi-bit values bitwise.
#[inline]
pub fn sub_key(h: Key128, index: u64) -> Key128 {
    let d = Deriver::new(tag::BITINDEX, index);
    Key128 { hi: d.derive(h), lo: h.lo ^ fmix64(index.wrapping_add(1).wrapping_mul(TAG_MIX)) }
}
