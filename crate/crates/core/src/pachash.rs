//! k-perfect PaCHash.
//!
//! Keys hash to ⌈an/k⌉ buckets and are laid out sorted by bucket, k per bin.
//! For bin i an Elias-Fano sequence stores a cut point p_i between the bucket
//! of the last key of bin i−1 and the bucket of the first key of bin i. A key
//! in bucket b can only sit in bins i..j−1, where i is the last bin with
//! p_i < b (or 0) and j the first with p_j > b. When that range has more than
//! one bin, the offset is stored bitwise in a shared 1-bit retrieval
//! structure under derived keys; this happens for roughly 1/a of the keys.

use crate::codec::{Persist, Reader, Writer};
use crate::error::{Error, Result};
use crate::hashing::{fmix64, sub_key, tag, Deriver, Key128};
use crate::phf::{check_distinct, check_keys, scheme, MkPhf};
use crate::retrieval::RetrievalFn;
use crate::succinct::elias_fano::EliasFanoSeq;

const SCAN_STEPS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct PaCHashConfig {
    pub k: u32,
    pub a: f64,
    pub seed: u64,
}

impl PaCHashConfig {
    pub fn new(k: u32, a: f64) -> Self {
        Self { k, a, seed: 0 }
    }

    pub fn seed(mut self, s: u64) -> Self {
        self.seed = s;
        self
    }
}

pub fn num_buckets(n: usize, k: u32, a: f64) -> u64 {
    ((a * n as f64 / k as f64).ceil() as u64).max(1)
}

/// ⌈log2(d)⌉ bits select one of d candidates.
#[inline]
fn offset_bits(d: u64) -> u32 {
    if d <= 1 {
        0
    } else {
        64 - (d - 1).leading_zeros()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PaCHashMkPhf {
    n: usize,
    config: PaCHashConfig,
    cuts: EliasFanoSeq,
    disamb: RetrievalFn,
    // derived
    num_buckets: u64,
    bucket_d: Deriver,
}

impl PaCHashMkPhf {
    pub fn build(keys: &[Key128], config: &PaCHashConfig) -> Result<Self> {
        check_keys(keys, config.k)?;
        if !(config.a > 0.0) || !config.a.is_finite() {
            return Err(Error::InvalidInput(format!("a must be positive (got {})", config.a)));
        }
        check_distinct(keys)?;
        let nb = num_buckets(keys.len(), config.k, config.a);
        let d = Deriver::new(tag::BUCKET, config.seed);
        let pairs: Vec<(u64, Key128)> = keys.iter().map(|&h| (d.range(h, nb), h)).collect();
        Self::from_buckets(pairs, nb, config)
    }

    /// Construction from explicit (bucket, key) pairs; buckets must be < `nb`.
    pub fn from_buckets(mut pairs: Vec<(u64, Key128)>, nb: u64, config: &PaCHashConfig) -> Result<Self> {
        let n = pairs.len();
        let k = config.k as usize;
        if n == 0 || k == 0 {
            return Err(Error::InvalidInput("need keys and k ≥ 1".into()));
        }
        if let Some(p) = pairs.iter().find(|p| p.0 >= nb) {
            return Err(Error::InvalidInput(format!("bucket {} out of range {nb}", p.0)));
        }
        pairs.sort_unstable();
        let m = n.div_ceil(k);
        let count_at_end = |end: usize, bucket: u64| pairs[..end].iter().rev().take_while(|p| p.0 == bucket).count();
        let count_at_start = |start: usize, bucket: u64| pairs[start..].iter().take_while(|p| p.0 == bucket).count();
        let mut cuts = Vec::with_capacity(m);
        cuts.push(pairs[0].0);
        for i in 1..m {
            let u = pairs[i * k - 1].0;
            let v = pairs[i * k].0;
            let p = if v > u + 1 {
                u + 1
            } else if v == u + 1 {
                // cutting at u leaves the bucket-u keys of bin i−1 ambiguous, cutting at v those of bin i
                if count_at_end(i * k, u).min(k) < count_at_start(i * k, v).min(k) {
                    u
                } else {
                    v
                }
            } else {
                u
            };
            cuts.push(p.max(cuts[i - 1]));
        }
        let cuts = EliasFanoSeq::new(&cuts)?;
        let mut f = Self {
            n,
            config: config.clone(),
            cuts,
            disamb: RetrievalFn::build(&[], 1, 0)?,
            num_buckets: nb,
            bucket_d: Deriver::new(tag::BUCKET, config.seed),
        };
        let mut entries = Vec::new();
        for (pos, &(b, h)) in pairs.iter().enumerate() {
            let bin = (pos / k) as u64;
            let (i, j) = f.candidates(b);
            if bin < i || bin >= j {
                return Err(Error::Build(format!("key at position {pos} (bin {bin}) outside candidates [{i}, {j})")));
            }
            let off = bin - i;
            for bit in 0..offset_bits(j - i) {
                entries.push((sub_key(h, bit as u64), ((off >> bit) & 1) as u8));
            }
        }
        f.disamb = RetrievalFn::build(&entries, 1, fmix64(config.seed ^ tag::RETRIEVAL as u64))?;
        Ok(f)
    }

    /// Candidate bins [i, j) for bucket b.
    #[inline]
    pub fn candidates(&self, b: u64) -> (u64, u64) {
        let i = if b == 0 { 0 } else { self.cuts.predecessor_index(b - 1).unwrap_or(0) };
        let mut j = i + 1;
        for p in self.cuts.iter_from(j) {
            if p > b {
                break;
            }
            j += 1;
            if j - i > SCAN_STEPS {
                j = self.cuts.successor_index(b);
                break;
            }
        }
        (i as u64, j as u64)
    }

    #[inline]
    pub fn bucket_of(&self, key: Key128) -> u64 {
        self.bucket_d.range(key, self.num_buckets)
    }

    /// Whether answering this key consults the retrieval structure.
    pub fn is_ambiguous(&self, key: Key128) -> bool {
        let (i, j) = self.candidates(self.bucket_of(key));
        j - i > 1
    }

    /// Query with an explicit bucket (for fixtures built with `from_buckets`).
    #[inline]
    pub fn query_in_bucket(&self, key: Key128, b: u64) -> u64 {
        let (i, j) = self.candidates(b);
        if j - i <= 1 {
            return i;
        }
        let mut off = 0u64;
        for bit in 0..offset_bits(j - i) {
            off |= (self.disamb.query(sub_key(key, bit as u64)) as u64 & 1) << bit;
        }
        (i + off).min(j - 1)
    }

    pub fn cut_points(&self) -> Vec<u64> {
        self.cuts.iter().collect()
    }

    pub fn retrieval_entries(&self) -> usize {
        self.disamb.len()
    }

    pub fn retrieval_bits(&self) -> u64 {
        self.disamb.size_bits()
    }

    pub fn index_bits(&self) -> u64 {
        self.cuts.size_bits()
    }

    pub fn num_buckets(&self) -> u64 {
        self.num_buckets
    }
}

impl Persist for PaCHashMkPhf {
    fn write(&self, w: &mut Writer) {
        w.put_u64(scheme::PACHASH);
        w.put_u64(self.n as u64);
        w.put_u64(self.config.k as u64);
        w.put_f64(self.config.a);
        w.put_u64(self.config.seed);
        w.put_u64(self.num_buckets);
        self.cuts.write(w);
        self.disamb.write(w);
    }

    fn read(r: &mut Reader) -> Result<Self> {
        r.expect("pachash scheme id", scheme::PACHASH)?;
        let n = r.get_usize()?;
        let k = r.get_u64()? as u32;
        let a = r.get_f64()?;
        let seed = r.get_u64()?;
        let nb = r.get_u64()?;
        if n == 0 || k == 0 || !(a > 0.0) || nb == 0 {
            return Err(Error::Format("pachash header out of range".into()));
        }
        let cuts = EliasFanoSeq::read(r)?;
        let disamb = RetrievalFn::read(r)?;
        if cuts.len() != n.div_ceil(k as usize) {
            return Err(Error::Format("pachash cut points do not match n/k".into()));
        }
        Ok(Self {
            n,
            config: PaCHashConfig { k, a, seed },
            cuts,
            disamb,
            num_buckets: nb,
            bucket_d: Deriver::new(tag::BUCKET, seed),
        })
    }
}

impl MkPhf for PaCHashMkPhf {
    #[inline]
    fn query(&self, key: Key128) -> u64 {
        self.query_in_bucket(key, self.bucket_of(key))
    }

    fn num_keys(&self) -> usize {
        self.n
    }

    fn k(&self) -> u32 {
        self.config.k
    }

    fn size_bits(&self) -> u64 {
        Persist::size_bits(self)
    }
}
