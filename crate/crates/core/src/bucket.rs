//! Minimal k-perfect hashing by bucket placement.
//!
//! Keys are grouped into ⌈n/λ⌉ buckets through the skewed assignment
//! β_k(u), so early buckets are large (placed while bins are empty) and late
//! ones small. Buckets are placed in decreasing order of size, ties by index,
//! which keeps the index order β was derived for except for the stray large
//! buckets near the end that would otherwise meet almost-full bins. Each gets
//! the smallest seed under which all of its keys land in bins that still have
//! room, counting collisions inside the bucket. A query hashes the key with its bucket's
//! seed into [0, ⌈n/k⌉).

use std::sync::Arc;

use crate::bucket_opt::{cached_beta, CurveTable, DEFAULT_GRID};
use crate::codec::{Persist, Reader, Writer};
use crate::error::{Error, Result};
use crate::hashing::{fmix64, tag, Deriver, Key128};
use crate::phf::{bin_capacity, check_distinct, check_keys, scheme, MkPhf};
use crate::succinct::bits::{bits_for, IntVec};
use crate::succinct::golomb_rice::{GolombRiceSeq, Widths};

pub const MAX_TRIALS: u64 = 1 << 34;
pub const GLOBAL_RETRIES: u64 = 3;
const SEED_MIX: u64 = 0xff51_afd7_ed55_8ccd;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedEncoding {
    /// Fixed width ⌈log2(max seed + 1)⌉ bits per bucket.
    Compact,
    /// Golomb-Rice with one global parameter.
    Rice,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BucketConfig {
    pub k: u32,
    pub lambda: f64,
    pub encoding: SeedEncoding,
    pub seed: u64,
    pub grid: usize,
}

impl BucketConfig {
    pub fn new(k: u32, lambda: f64, encoding: SeedEncoding) -> Self {
        Self { k, lambda, encoding, seed: 0, grid: DEFAULT_GRID }
    }

    pub fn seed(mut self, s: u64) -> Self {
        self.seed = s;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Seeds {
    Compact(IntVec),
    Rice(GolombRiceSeq),
}

impl Seeds {
    fn encode(seeds: &[u64], enc: SeedEncoding) -> Result<Self> {
        Ok(match enc {
            SeedEncoding::Compact => {
                let max = seeds.iter().copied().max().unwrap_or(0);
                Seeds::Compact(IntVec::from_slice(seeds, bits_for(max).max(1)))
            }
            SeedEncoding::Rice => Seeds::Rice(GolombRiceSeq::new(seeds, Widths::Uniform(rice_parameter(seeds)))?),
        })
    }

    #[inline]
    fn get(&self, i: usize) -> u64 {
        match self {
            Seeds::Compact(v) => v.get(i),
            Seeds::Rice(g) => g.get(i),
        }
    }

    fn len(&self) -> usize {
        match self {
            Seeds::Compact(v) => v.len(),
            Seeds::Rice(g) => g.len(),
        }
    }
}

/// Global Rice parameter ⌊log2(mean + 1)⌋.
pub fn rice_parameter(seeds: &[u64]) -> u32 {
    if seeds.is_empty() {
        return 0;
    }
    let mean = seeds.iter().map(|&s| s as f64).sum::<f64>() / seeds.len() as f64;
    (mean + 1.0).log2().floor().max(0.0) as u32
}

#[derive(Clone, Debug, PartialEq)]
pub struct BucketMkPhf {
    n: usize,
    config: BucketConfig,
    /// Global seed actually used (after retries).
    seed: u64,
    seeds: Seeds,
    // derived
    beta: Arc<CurveTable>,
    num_buckets: u64,
    bucket_d: Deriver,
}

/// λ = 4√k: around λ ≈ 12 at k = 10, and small enough relative to k that
/// large-k builds never face buckets bigger than the remaining free slots.
pub fn suggested_lambda(k: u32) -> f64 {
    4.0 * (k.max(1) as f64).sqrt()
}

pub fn num_buckets(n: usize, lambda: f64) -> u64 {
    ((n as f64 / lambda).ceil() as u64).max(1)
}

/// min(⌊nb·β(u)⌋, nb − 1).
#[inline]
pub fn assign_bucket(u: f64, num_buckets: u64, beta: &CurveTable) -> u64 {
    ((num_buckets as f64 * beta.eval(u)) as u64).min(num_buckets - 1)
}

#[inline]
/// Hash of placement trial `seed`.
pub fn place_deriver(global: u64, seed: u64) -> Deriver {
    Deriver::new(tag::PLACE, global ^ seed.wrapping_mul(SEED_MIX))
}

/// Smallest seed under which all keys fit; occupancies are committed.
/// Returns None after `max_trials` failures.
pub fn place_bucket(
    keys: &[Key128],
    occupancy: &mut [u32],
    caps: &dyn Fn(u64) -> u32,
    global: u64,
    max_trials: u64,
) -> Option<u64> {
    let m = occupancy.len() as u64;
    let mut bins = Vec::with_capacity(keys.len());
    'seed: for s in 0..max_trials {
        let d = place_deriver(global, s);
        bins.clear();
        for &h in keys {
            let b = d.range(h, m);
            if occupancy[b as usize] >= caps(b) {
                for &p in &bins {
                    occupancy[p as usize] -= 1;
                }
                continue 'seed;
            }
            occupancy[b as usize] += 1;
            bins.push(b);
        }
        return Some(s);
    }
    None
}

impl BucketMkPhf {
    pub fn build(keys: &[Key128], config: &BucketConfig) -> Result<Self> {
        Self::build_with_trials(keys, config, MAX_TRIALS)
    }

    pub fn build_with_trials(keys: &[Key128], config: &BucketConfig, max_trials: u64) -> Result<Self> {
        check_keys(keys, config.k)?;
        if !(config.lambda > 0.0) || !config.lambda.is_finite() {
            return Err(Error::InvalidInput(format!("λ must be positive (got {})", config.lambda)));
        }
        check_distinct(keys)?;
        let beta = cached_beta(config.k, config.grid)?;
        let n = keys.len();
        let k = config.k;
        let m = (n as u64).div_ceil(k as u64);
        let nb = num_buckets(n, config.lambda);
        let caps = |b: u64| bin_capacity(n, k, b);
        let mut last_err = None;
        for attempt in 0..=GLOBAL_RETRIES {
            let seed = if attempt == 0 { config.seed } else { fmix64(config.seed ^ attempt) };
            let bucket_d = Deriver::new(tag::BUCKET, seed);
            let mut tagged: Vec<(u64, Key128)> =
                keys.iter().map(|&h| (assign_bucket(bucket_d.unit(h), nb, &beta), h)).collect();
            tagged.sort_unstable_by_key(|p| p.0);
            let mut occupancy = vec![0u32; m as usize];
            let mut seeds = vec![0u64; nb as usize];
            let mut groups = Vec::new();
            let mut i = 0;
            while i < tagged.len() {
                let j = i + tagged[i..].partition_point(|p| p.0 == tagged[i].0);
                groups.push(i..j);
                i = j;
            }
            // larger buckets first, ties in index order; β already makes the order mostly by index
            groups.sort_by_key(|r| std::cmp::Reverse(r.len()));
            let mut group = Vec::new();
            let mut failed = None;
            for r in groups {
                let b = tagged[r.start].0;
                group.clear();
                group.extend(tagged[r].iter().map(|p| p.1));
                match place_bucket(&group, &mut occupancy, &caps, seed, max_trials) {
                    Some(s) => seeds[b as usize] = s,
                    None => {
                        failed = Some((b, group.len()));
                        break;
                    }
                }
            }
            if let Some((b, size)) = failed {
                last_err = Some(Error::Build(format!(
                    "no seed within {max_trials} trials for bucket {b} of {nb} ({size} keys), global seed {seed}"
                )));
                continue;
            }
            return Ok(Self {
                n,
                config: config.clone(),
                seed,
                seeds: Seeds::encode(&seeds, config.encoding)?,
                beta,
                num_buckets: nb,
                bucket_d,
            });
        }
        Err(last_err.expect("at least one attempt"))
    }

    pub fn config(&self) -> &BucketConfig {
        &self.config
    }

    pub fn num_buckets(&self) -> u64 {
        self.num_buckets
    }

    pub fn seed_of(&self, bucket: usize) -> u64 {
        self.seeds.get(bucket)
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.seeds.len()).map(|i| self.seeds.get(i)).collect()
    }

    /// Same seeds in the other encoding.
    pub fn reencode(&self, encoding: SeedEncoding) -> Result<Self> {
        let mut f = self.clone();
        f.seeds = Seeds::encode(&self.seeds(), encoding)?;
        f.config.encoding = encoding;
        Ok(f)
    }

    #[inline]
    pub fn bucket_of(&self, key: Key128) -> u64 {
        assign_bucket(self.bucket_d.unit(key), self.num_buckets, &self.beta)
    }
}

impl Persist for BucketMkPhf {
    fn write(&self, w: &mut Writer) {
        w.put_u64(scheme::BUCKET);
        w.put_u64(self.n as u64);
        w.put_u64(self.config.k as u64);
        w.put_f64(self.config.lambda);
        w.put_u64(self.config.grid as u64);
        w.put_u64(self.config.seed);
        w.put_u64(self.seed);
        match &self.seeds {
            Seeds::Compact(v) => {
                w.put_u64(0);
                v.write(w);
            }
            Seeds::Rice(g) => {
                w.put_u64(1);
                g.write(w);
            }
        }
    }

    fn read(r: &mut Reader) -> Result<Self> {
        r.expect("bucket scheme id", scheme::BUCKET)?;
        let n = r.get_usize()?;
        let k = r.get_u64()? as u32;
        let lambda = r.get_f64()?;
        let grid = r.get_usize()?;
        let config_seed = r.get_u64()?;
        let seed = r.get_u64()?;
        if n == 0 || k == 0 || !(lambda > 0.0) || !(2..=1 << 24).contains(&grid) {
            return Err(Error::Format("bucket header out of range".into()));
        }
        let (encoding, seeds) = match r.get_u64()? {
            0 => (SeedEncoding::Compact, Seeds::Compact(IntVec::read(r)?)),
            1 => (SeedEncoding::Rice, Seeds::Rice(GolombRiceSeq::read(r, None)?)),
            e => return Err(Error::Format(format!("unknown seed encoding {e}"))),
        };
        let nb = num_buckets(n, lambda);
        if seeds.len() as u64 != nb {
            return Err(Error::Format(format!("{} seeds for {nb} buckets", seeds.len())));
        }
        Ok(Self {
            n,
            config: BucketConfig { k, lambda, encoding, seed: config_seed, grid },
            seed,
            seeds,
            beta: cached_beta(k, grid)?,
            num_buckets: nb,
            bucket_d: Deriver::new(tag::BUCKET, seed),
        })
    }
}

impl MkPhf for BucketMkPhf {
    #[inline]
    fn query(&self, key: Key128) -> u64 {
        let s = self.seeds.get(self.bucket_of(key) as usize);
        place_deriver(self.seed, s).range(key, self.num_bins())
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
