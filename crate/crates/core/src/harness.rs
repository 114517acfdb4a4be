//! Key generation, verification, benchmarking and the on-disk container.

use std::collections::HashSet;
use std::fmt;
use std::hint::black_box;
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::bucket::{BucketConfig, BucketMkPhf, SeedEncoding};
use crate::codec::{Persist, Reader, Writer};
use crate::error::{Error, Result};
use crate::hashing::{hash_key, Key128};
use crate::pachash::{PaCHashConfig, PaCHashMkPhf};
use crate::phf::{bin_capacity, scheme, MkPhf};
use crate::recsplit::{RecSplitConfig, RecSplitMkPhf};
use crate::threshold::{LayerPolicy, ThresholdConfig, ThresholdMkPhf, Variant};

pub const CONTAINER_MAGIC: u64 = u64::from_le_bytes(*b"KPHFFILE");
pub const CONTAINER_VERSION: u64 = 1;
pub const CSV_HEADER: [&str; 8] =
    ["scheme", "config", "n", "k", "bits_per_key", "overhead_pct", "construct_ns_per_key", "query_ns_per_query"];
const ALPHABET: &[u8] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";

/// log2(e) − log2(k^k/k!)/k bits per key.
pub fn lower_bound_bits_per_key(k: u32) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    let k = k as f64;
    std::f64::consts::LOG2_E - (k * k.ln() - ln_gamma(k + 1.0)) / (k * std::f64::consts::LN_2)
}

/// `n` distinct alphanumeric strings with lengths uniform in `min_len..=max_len`.
pub fn gen_keys(n: usize, min_len: usize, max_len: usize, seed: u64) -> Result<Vec<Vec<u8>>> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    if min_len > max_len {
        return Err(Error::InvalidInput(format!("empty length range {min_len}..={max_len}")));
    }
    let available = (min_len..=max_len)
        .map(|l| (ALPHABET.len() as u128).checked_pow(l as u32).unwrap_or(u128::MAX))
        .fold(0u128, u128::saturating_add);
    if (n as u128) > available {
        return Err(Error::InvalidInput(format!(
            "length range {min_len}..={max_len} has only {available} distinct strings, {n} requested"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(n);
    let mut keys = Vec::with_capacity(n);
    while keys.len() < n {
        let len = rng.random_range(min_len..=max_len);
        let key: Vec<u8> = (0..len).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect();
        if seen.insert(key.clone()) {
            keys.push(key);
        }
    }
    Ok(keys)
}

pub fn write_keys(path: &Path, keys: &[Vec<u8>]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for k in keys {
        out.write_all(k)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_keys(path: &Path) -> Result<Vec<Vec<u8>>> {
    let input = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut keys = Vec::new();
    for line in input.split(b'\n') {
        let line = line?;
        if !line.is_empty() {
            keys.push(line);
        }
    }
    Ok(keys)
}

pub fn hash_keys(keys: &[Vec<u8>], global_seed: u64) -> Vec<Key128> {
    keys.iter().map(|k| hash_key(k, global_seed)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BadBin {
    pub bin: u64,
    pub count: u64,
    pub expected: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyReport {
    pub n: usize,
    pub k: u32,
    pub bins: u64,
    pub out_of_range: usize,
    pub bad_bins: usize,
    /// First few offending bins.
    pub examples: Vec<BadBin>,
    pub min_load: u64,
    pub max_load: u64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.out_of_range == 0 && self.bad_bins == 0
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: n={} k={} bins={} load=[{}, {}] out_of_range={} bad_bins={}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.n,
            self.k,
            self.bins,
            self.min_load,
            self.max_load,
            self.out_of_range,
            self.bad_bins
        )?;
        for b in &self.examples {
            write!(f, "\n  bin {}: {} keys, expected {}", b.bin, b.count, b.expected)?;
        }
        Ok(())
    }
}

/// Exhaustive audit: every bin holds exactly k keys except possibly the last.
pub fn verify(phf: &dyn MkPhf, keys: &[Key128], k: u32) -> VerifyReport {
    let n = keys.len();
    let bins = if k == 0 { 0 } else { (n as u64).div_ceil(k as u64) };
    let mut hist = vec![0u64; bins as usize];
    let mut out_of_range = 0;
    for &h in keys {
        match hist.get_mut(phf.query(h) as usize) {
            Some(c) => *c += 1,
            None => out_of_range += 1,
        }
    }
    let mut bad_bins = 0;
    let mut examples = Vec::new();
    for (b, &count) in hist.iter().enumerate() {
        let expected = bin_capacity(n, k, b as u64) as u64;
        if count != expected {
            bad_bins += 1;
            if examples.len() < 8 {
                examples.push(BadBin { bin: b as u64, count, expected });
            }
        }
    }
    // a structure built for another k or n cannot pass even with a clean histogram
    if phf.k() != k || phf.num_keys() != n {
        bad_bins = bad_bins.max(1);
    }
    VerifyReport {
        n,
        k,
        bins,
        out_of_range,
        bad_bins,
        examples,
        min_load: hist.iter().copied().min().unwrap_or(0),
        max_load: hist.iter().copied().max().unwrap_or(0),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SchemeConfig {
    Threshold(ThresholdConfig),
    Bucket(BucketConfig),
    RecSplit(RecSplitConfig),
    PaCHash(PaCHashConfig),
}

impl SchemeConfig {
    pub fn k(&self) -> u32 {
        match self {
            SchemeConfig::Threshold(c) => c.k,
            SchemeConfig::Bucket(c) => c.k,
            SchemeConfig::RecSplit(c) => c.k,
            SchemeConfig::PaCHash(c) => c.k,
        }
    }

    pub fn scheme_name(&self) -> &'static str {
        match self {
            SchemeConfig::Threshold(_) => "threshold",
            SchemeConfig::Bucket(_) => "bucket",
            SchemeConfig::RecSplit(_) => "recsplit",
            SchemeConfig::PaCHash(_) => "pachash",
        }
    }

    /// Stable parameter string for the CSV `config` column.
    pub fn label(&self) -> String {
        match self {
            SchemeConfig::Threshold(c) => format!(
                "gamma={} t={} variant={} policy={} seed={}",
                c.gamma,
                c.t,
                variant_name(c.variant),
                policy_name(c.policy),
                c.seed
            ),
            SchemeConfig::Bucket(c) => {
                format!("lambda={} encoding={} seed={}", c.lambda, encoding_name(c.encoding), c.seed)
            }
            SchemeConfig::RecSplit(c) => {
                format!("ell={} b={} seed={}", c.ell, c.bucket_size, c.seed)
            }
            SchemeConfig::PaCHash(c) => format!("a={} seed={}", c.a, c.seed),
        }
    }

    pub fn build(&self, keys: &[Key128]) -> Result<AnyPhf> {
        Ok(match self {
            SchemeConfig::Threshold(c) => AnyPhf::Threshold(ThresholdMkPhf::build(keys, c)?),
            SchemeConfig::Bucket(c) => AnyPhf::Bucket(BucketMkPhf::build(keys, c)?),
            SchemeConfig::RecSplit(c) => AnyPhf::RecSplit(RecSplitMkPhf::build(keys, c)?),
            SchemeConfig::PaCHash(c) => AnyPhf::PaCHash(PaCHashMkPhf::build(keys, c)?),
        })
    }
}

pub fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Plain => "plain",
        Variant::Packed => "packed",
        Variant::Consensus => "consensus",
    }
}

pub fn policy_name(p: LayerPolicy) -> &'static str {
    match p {
        LayerPolicy::Overload => "overload",
        LayerPolicy::TwoLayer => "two-layer",
    }
}

pub fn encoding_name(e: SeedEncoding) -> &'static str {
    match e {
        SeedEncoding::Compact => "compact",
        SeedEncoding::Rice => "rice",
    }
}

/// Any of the four constructions; serializes as the wrapped structure.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyPhf {
    Threshold(ThresholdMkPhf),
    Bucket(BucketMkPhf),
    RecSplit(RecSplitMkPhf),
    PaCHash(PaCHashMkPhf),
}

impl AnyPhf {
    fn inner(&self) -> &dyn MkPhf {
        match self {
            AnyPhf::Threshold(f) => f,
            AnyPhf::Bucket(f) => f,
            AnyPhf::RecSplit(f) => f,
            AnyPhf::PaCHash(f) => f,
        }
    }

    pub fn scheme_id(&self) -> u64 {
        match self {
            AnyPhf::Threshold(_) => scheme::THRESHOLD,
            AnyPhf::Bucket(_) => scheme::BUCKET,
            AnyPhf::RecSplit(_) => scheme::RECSPLIT,
            AnyPhf::PaCHash(_) => scheme::PACHASH,
        }
    }

    pub fn scheme_name(&self) -> &'static str {
        match self {
            AnyPhf::Threshold(_) => "threshold",
            AnyPhf::Bucket(_) => "bucket",
            AnyPhf::RecSplit(_) => "recsplit",
            AnyPhf::PaCHash(_) => "pachash",
        }
    }
}

impl MkPhf for AnyPhf {
    #[inline]
    fn query(&self, key: Key128) -> u64 {
        match self {
            AnyPhf::Threshold(f) => f.query(key),
            AnyPhf::Bucket(f) => f.query(key),
            AnyPhf::RecSplit(f) => f.query(key),
            AnyPhf::PaCHash(f) => f.query(key),
        }
    }

    fn num_keys(&self) -> usize {
        self.inner().num_keys()
    }

    fn k(&self) -> u32 {
        self.inner().k()
    }

    fn size_bits(&self) -> u64 {
        self.inner().size_bits()
    }
}

impl Persist for AnyPhf {
    fn write(&self, w: &mut Writer) {
        match self {
            AnyPhf::Threshold(f) => f.write(w),
            AnyPhf::Bucket(f) => f.write(w),
            AnyPhf::RecSplit(f) => f.write(w),
            AnyPhf::PaCHash(f) => f.write(w),
        }
    }

    fn read(r: &mut Reader) -> Result<Self> {
        let id = r.clone().get_u64()?;
        Ok(match id {
            scheme::THRESHOLD => AnyPhf::Threshold(ThresholdMkPhf::read(r)?),
            scheme::BUCKET => AnyPhf::Bucket(BucketMkPhf::read(r)?),
            scheme::RECSPLIT => AnyPhf::RecSplit(RecSplitMkPhf::read(r)?),
            scheme::PACHASH => AnyPhf::PaCHash(PaCHashMkPhf::read(r)?),
            other => return Err(Error::Format(format!("unknown scheme id {other:#x}"))),
        })
    }
}

/// Container: magic, version, scheme id, k, n, then the length-prefixed
/// structure, all little-endian 64-bit words.
pub fn to_container(phf: &AnyPhf) -> Vec<u8> {
    let mut w = Writer::new();
    w.put_u64(CONTAINER_MAGIC);
    w.put_u64(CONTAINER_VERSION);
    w.put_u64(phf.scheme_id());
    w.put_u64(phf.k() as u64);
    w.put_u64(phf.num_keys() as u64);
    w.put_section(|s| phf.write(s));
    w.into_bytes()
}

/// Parses a container; `expected_k` rejects structures built for another k.
pub fn from_container(bytes: &[u8], expected_k: Option<u32>) -> Result<AnyPhf> {
    let mut r = Reader::new(bytes);
    r.expect("container magic", CONTAINER_MAGIC)?;
    r.expect("container version", CONTAINER_VERSION)?;
    let id = r.get_u64()?;
    let k = r.get_u64()?;
    let n = r.get_u64()?;
    if let Some(want) = expected_k {
        if k != want as u64 {
            return Err(Error::Format(format!("container holds k = {k}, requested k = {want}")));
        }
    }
    let mut body = r.section()?;
    r.finish()?;
    let phf = AnyPhf::read(&mut body)?;
    body.finish()?;
    if phf.scheme_id() != id || phf.k() as u64 != k || phf.num_keys() as u64 != n {
        return Err(Error::Format("container header disagrees with its payload".into()));
    }
    Ok(phf)
}

pub fn save(phf: &AnyPhf, path: &Path) -> Result<()> {
    std::fs::write(path, to_container(phf))?;
    Ok(())
}

pub fn load(path: &Path, expected_k: Option<u32>) -> Result<AnyPhf> {
    from_container(&std::fs::read(path)?, expected_k)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchOptions {
    pub construct_runs: usize,
    pub query_runs: usize,
    pub queries: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { construct_runs: 3, query_runs: 3, queries: 10_000_000, seed: 0x6b70_6866 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub scheme: String,
    pub config: String,
    pub n: usize,
    pub k: u32,
    pub bits_per_key: f64,
    pub overhead_pct: f64,
    pub construct_ns_per_key: f64,
    pub query_ns_per_query: f64,
    pub verified: bool,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Builds, audits, then times. A failed audit aborts before any timing.
pub fn bench(config: &SchemeConfig, keys: &[Key128], opts: &BenchOptions) -> Result<BenchRecord> {
    let n = keys.len();
    let k = config.k();
    let phf = config.build(keys)?;
    let report = verify(&phf, keys, k);
    if !report.passed() {
        return Err(Error::Build(format!("verification failed, not benchmarking\n{report}")));
    }
    let mut build_ns = Vec::with_capacity(opts.construct_runs.max(1));
    for _ in 0..opts.construct_runs.max(1) {
        let start = Instant::now();
        let f = black_box(config.build(black_box(keys))?);
        build_ns.push(start.elapsed().as_nanos() as f64 / n as f64);
        drop(f);
    }
    let mut order = keys.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    let queries = opts.queries.max(1);
    let mut query_ns = Vec::with_capacity(opts.query_runs.max(1));
    for _ in 0..opts.query_runs.max(1) {
        let start = Instant::now();
        let mut acc = 0u64;
        let mut done = 0;
        while done < queries {
            let take = (queries - done).min(order.len());
            for &h in &order[..take] {
                acc = acc.wrapping_add(phf.query(black_box(h)));
            }
            done += take;
        }
        black_box(acc);
        query_ns.push(start.elapsed().as_nanos() as f64 / queries as f64);
    }
    let bits_per_key = MkPhf::size_bits(&phf) as f64 / n as f64;
    Ok(BenchRecord {
        scheme: config.scheme_name().into(),
        config: config.label(),
        n,
        k,
        bits_per_key,
        overhead_pct: 100.0 * (bits_per_key / lower_bound_bits_per_key(k) - 1.0),
        construct_ns_per_key: median(build_ns),
        query_ns_per_query: median(query_ns),
        verified: true,
    })
}

/// Verified records only; the header is `CSV_HEADER`.
pub fn emit_csv<W: Write>(records: &[BenchRecord], out: W) -> Result<()> {
    write_csv(records, out, true)
}

/// As `emit_csv`; without the header when appending to an existing file.
pub fn write_csv<W: Write>(records: &[BenchRecord], out: W, header: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    if header {
        w.write_record(CSV_HEADER).map_err(csv_err)?;
    }
    for r in records.iter().filter(|r| r.verified) {
        w.write_record([
            r.scheme.clone(),
            r.config.clone(),
            r.n.to_string(),
            r.k.to_string(),
            r.bits_per_key.to_string(),
            r.overhead_pct.to_string(),
            r.construct_ns_per_key.to_string(),
            r.query_ns_per_query.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
