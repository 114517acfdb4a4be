//! Minimal 1-PHF for the few keys that no threshold layer kept.
//!
//! Layered fingerprint bumping: each layer hashes the remaining keys into as
//! many slots as there are keys, marks slots hit exactly once, and passes the
//! colliding keys on. Output is the rank of the key's marked slot among all
//! marked slots, so the function is minimal by construction.

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::hashing::{fmix64, tag, Deriver, Key128};
use crate::succinct::bits::{BitBuf, IntVec};
use crate::succinct::BitVec;

const TAG: u64 = u64::from_le_bytes(*b"FALLBK\x01\0");
const MAX_LAYERS: usize = 256;
const LAYER_MIX: u64 = 0xbf58_476d_1ce4_e5b9;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fallback1Phf {
    n: usize,
    seed: u64,
    sizes: IntVec,
    bits: BitVec,
    // derived on load
    derivers: Vec<Deriver>,
    offsets: Vec<usize>,
}

fn layer_deriver(seed: u64, layer: usize) -> Deriver {
    Deriver::new(tag::FALLBACK, fmix64(seed ^ (layer as u64 + 1).wrapping_mul(LAYER_MIX)))
}

impl Fallback1Phf {
    pub fn build(keys: &[Key128], seed: u64) -> Result<Self> {
        let mut rest = keys.to_vec();
        let mut sizes = Vec::new();
        let mut bits = BitBuf::new();
        let mut count = Vec::new();
        while !rest.is_empty() {
            if sizes.len() == MAX_LAYERS {
                return Err(Error::Build(format!(
                    "fallback 1-PHF still has {} keys after {MAX_LAYERS} layers (duplicate keys?)",
                    rest.len()
                )));
            }
            let d = layer_deriver(seed, sizes.len());
            let size = rest.len();
            count.clear();
            count.resize(size, 0u8);
            for &h in &rest {
                let p = d.range(h, size as u64) as usize;
                count[p] = count[p].saturating_add(1);
            }
            for &c in &count {
                bits.push_bit(c == 1);
            }
            rest.retain(|&h| count[d.range(h, size as u64) as usize] != 1);
            sizes.push(size as u64);
        }
        let mut f = Self {
            n: keys.len(),
            seed,
            sizes: IntVec::minimal(&sizes, 1),
            bits: bits.into(),
            derivers: Vec::new(),
            offsets: Vec::new(),
        };
        f.derive_tables();
        Ok(f)
    }

    fn derive_tables(&mut self) {
        self.derivers = (0..self.sizes.len()).map(|l| layer_deriver(self.seed, l)).collect();
        let mut off = 0usize;
        self.offsets = self
            .sizes
            .iter()
            .map(|s| {
                let o = off;
                off += s as usize;
                o
            })
            .collect();
    }

    /// Index in [0, n) for member keys.
    #[inline]
    pub fn query(&self, h: Key128) -> usize {
        for (l, d) in self.derivers.iter().enumerate() {
            let pos = self.offsets[l] + d.range(h, self.sizes.get(l)) as usize;
            if self.bits.get(pos) {
                return self.bits.rank1(pos);
            }
        }
        0
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn layers(&self) -> usize {
        self.sizes.len()
    }

    pub fn write(&self, w: &mut Writer) {
        w.put_u64(TAG);
        w.put_u64(self.n as u64);
        w.put_u64(self.seed);
        self.sizes.write(w);
        self.bits.write(w);
    }

    pub fn read(r: &mut Reader) -> Result<Self> {
        r.expect("fallback tag", TAG)?;
        let n = r.get_usize()?;
        let seed = r.get_u64()?;
        let sizes = IntVec::read(r)?;
        let bits = BitVec::read(r)?;
        if bits.len() != sizes.iter().sum::<u64>() as usize || bits.count_ones() != n {
            return Err(Error::Format("fallback layer table inconsistent".into()));
        }
        let mut f = Self { n, seed, sizes, bits, derivers: Vec::new(), offsets: Vec::new() };
        f.derive_tables();
        Ok(f)
    }

    pub fn size_bits(&self) -> u64 {
        let mut w = Writer::counting();
        self.write(&mut w);
        w.len() as u64 * 8
    }
}
