//! k-perfect RecSplit.
//!
//! Keys are hashed to buckets of expected size b. Inside a bucket, brute-force
//! seeds split the keys recursively until leaves hold k keys: nodes of at
//! most ℓk keys split straight into leaves (the last may be short), larger
//! nodes split in two with a complete left subtree of ℓk·2^j keys. Leaves are
//! bins, so no seed is needed below them.
//!
//! Full leaves of bucket i with x_i keys before it land at ⌊x_i/k⌋ + j. Short
//! leaves pile up until a bucket whose short leaf crosses a multiple of k;
//! that bucket stores one more seed splitting away the keys needed to fill
//! its last bin, and the others wait for the next crossing bucket.
//!
//! A bucket's seeds are Rice coded in DFS order, all fixed-width parts first
//! and all unary parts after them, so a walk can skip whole subtrees with
//! precomputed bit counts and a popcount scan.

use statrs::function::gamma::ln_gamma;

use crate::codec::{Persist, Reader, Writer};
use crate::error::{Error, Result};
use crate::hashing::{fmix64, tag, Deriver, Key128};
use crate::phf::{check_distinct, check_keys, scheme, MkPhf};
use crate::succinct::bits::{mask, read_bits, select_in_word, BitBuf};
use crate::succinct::elias_fano::EliasFanoSeq;
use crate::succinct::golomb_rice::{push_unary, read_unary};

pub const MAX_TRIALS: u64 = 1 << 34;
pub const GLOBAL_RETRIES: u64 = 3;
pub const DEFAULT_BUCKET_SIZE: usize = 2000;
const DEPTH_MIX: u64 = 0xc2b2_ae3d_27d4_eb4f;
const MERGE_DEPTH: u64 = 0xffff;

#[derive(Clone, Debug, PartialEq)]
pub struct RecSplitConfig {
    pub k: u32,
    pub bucket_size: usize,
    pub ell: u32,
    pub seed: u64,
}

impl RecSplitConfig {
    pub fn new(k: u32, ell: u32, bucket_size: usize) -> Self {
        Self { k, bucket_size, ell, seed: 0 }
    }

    pub fn seed(mut self, s: u64) -> Self {
        self.seed = s;
        self
    }
}

/// Node kind for `s` keys: a leaf, `full` children of k keys plus one of
/// `rest` (if nonzero), or a binary split with `left` keys on the left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shape {
    Leaf,
    Fanout { full: usize, rest: usize },
    Binary { left: usize },
}

#[inline]
fn shape(s: usize, k: usize, ell: usize) -> Shape {
    if s <= k {
        return Shape::Leaf;
    }
    let unit = ell * k;
    if s <= unit {
        return Shape::Fanout { full: s / k, rest: s % k };
    }
    let mut left = unit;
    while left * 2 < s {
        left *= 2;
    }
    Shape::Binary { left }
}

/// Children of a node with `s` keys; empty for a leaf.
pub fn split_tree_shape(s: usize, k: usize, ell: usize) -> Vec<usize> {
    match shape(s, k, ell) {
        Shape::Leaf => Vec::new(),
        Shape::Fanout { full, rest } => {
            let mut c = vec![k; full];
            if rest != 0 {
                c.push(rest);
            }
            c
        }
        Shape::Binary { left } => vec![left, s - left],
    }
}

/// Leaf sizes of the whole tree in DFS order.
pub fn leaf_sizes(s: usize, k: usize, ell: usize) -> Vec<usize> {
    let c = split_tree_shape(s, k, ell);
    if c.is_empty() {
        return vec![s];
    }
    c.into_iter().flat_map(|x| leaf_sizes(x, k, ell)).collect()
}

/// Child of position p in [0, Σ sizes) under cumulative boundaries.
#[inline]
fn child_of(pos: u64, children: &[usize]) -> usize {
    let mut acc = 0u64;
    for (j, &c) in children.iter().enumerate() {
        acc += c as u64;
        if pos < acc {
            return j;
        }
    }
    children.len() - 1
}

#[inline]
fn split_deriver(global: u64, depth: u64, seed: u64) -> Deriver {
    Deriver::new(tag::SPLIT, fmix64(global ^ (depth + 1).wrapping_mul(DEPTH_MIX)) ^ seed)
}

#[inline]
fn merge_deriver(global: u64, seed: u64) -> Deriver {
    Deriver::new(tag::MERGE, fmix64(global ^ MERGE_DEPTH.wrapping_mul(DEPTH_MIX)) ^ seed)
}

/// Smallest seed whose hash into [0, Σ sizes) reproduces the child sizes.
pub fn find_split_seed(
    keys: &[Key128],
    children: &[usize],
    make: &dyn Fn(u64) -> Deriver,
    max_trials: u64,
) -> Option<u64> {
    if children.len() <= 1 {
        return Some(0);
    }
    let s = keys.len() as u64;
    let mut counts = vec![0usize; children.len()];
    'seed: for seed in 0..max_trials {
        let d = make(seed);
        counts.iter_mut().for_each(|c| *c = 0);
        for &h in keys {
            let j = child_of(d.range(h, s), children);
            counts[j] += 1;
            if counts[j] > children[j] {
                continue 'seed;
            }
        }
        return Some(seed);
    }
    None
}

/// ln of the probability that one seed produces the child sizes.
fn ln_success(children: &[usize], ln_fact: &[f64]) -> f64 {
    let s: usize = children.iter().sum();
    let sf = s as f64;
    ln_fact[s]
        + children
            .iter()
            .map(|&c| -ln_fact[c] + if c == 0 { 0.0 } else { c as f64 * (c as f64 / sf).ln() })
            .sum::<f64>()
}

/// Rice parameter of a split: the L minimizing L + 1 + E[⌊X/2^L⌋] for a geometric seed X with success
/// probability p, where E[⌊X/2^L⌋] = q^(2^L)/(1 − q^(2^L)), q = 1 − p.
pub fn optimal_width(ln_p: f64) -> u32 {
    let ln_q = (-ln_p.exp()).ln_1p();
    let cost = |l: u32| {
        let a = (ln_q * (1u64 << l) as f64).exp();
        l as f64 + 1.0 + a / (1.0 - a)
    };
    // the cost is unimodal in L with its minimum near log2(ln 2 / p); walk from there
    let mut l = ((std::f64::consts::LN_2.ln() - ln_p) / std::f64::consts::LN_2).floor().clamp(0.0, 39.0) as u32;
    while l > 0 && cost(l - 1) <= cost(l) {
        l -= 1;
    }
    while l < 39 && cost(l + 1) < cost(l) {
        l += 1;
    }
    l
}

/// Per-size tables shared by build and query.
#[derive(Clone, Debug, PartialEq)]
struct Tables {
    k: usize,
    ell: usize,
    width: Vec<u32>,
    skip_fixed: Vec<u64>,
    nodes: Vec<u64>,
    ln_fact: Vec<f64>,
}

impl Tables {
    fn new(k: usize, ell: usize, max_size: usize) -> Self {
        let top = max_size.max(k);
        let ln_fact: Vec<f64> = (0..=top).map(|i| ln_gamma(i as f64 + 1.0)).collect();
        let mut t =
            Self { k, ell, width: vec![0; top + 1], skip_fixed: vec![0; top + 1], nodes: vec![0; top + 1], ln_fact };
        for s in 0..=top {
            let c = split_tree_shape(s, k, ell);
            if c.is_empty() {
                continue;
            }
            let w = optimal_width(ln_success(&c, &t.ln_fact));
            t.width[s] = w;
            t.skip_fixed[s] = w as u64 + c.iter().map(|&x| t.skip_fixed[x]).sum::<u64>();
            t.nodes[s] = 1 + c.iter().map(|&x| t.nodes[x]).sum::<u64>();
        }
        t
    }

    fn merge_width(&self, fill: usize, rest: usize) -> u32 {
        optimal_width(ln_success(&[fill, rest], &self.ln_fact))
    }
}

/// Position just after the `count`-th one bit at or after `pos`.
fn skip_ones(words: &[u64], pos: usize, mut count: u64) -> usize {
    if count == 0 {
        return pos;
    }
    let mut wi = pos / 64;
    let mut w = words[wi] & !mask((pos % 64) as u32);
    loop {
        let c = w.count_ones() as u64;
        if count <= c {
            return wi * 64 + select_in_word(w, (count - 1) as u32) as usize + 1;
        }
        count -= c;
        wi += 1;
        w = words[wi];
    }
}

/// (bin, fill, r) when the short leaf (r keys) of a bucket starting at key
/// `x` with `s` keys completes the pending partial bin; a merge seed splits
/// it into fill keys for that bin and r − fill for the next one.
#[inline]
fn crossing(x: u64, s: u64, k: usize) -> Option<(u64, usize, usize)> {
    let (x, s) = (x as usize, s as usize);
    let (pending, r) = (x % k, s % k);
    (pending + r >= k && r > 0).then_some(((x / k + s / k) as u64, k - pending, r))
}

/// Fixed width of every bucket's merge seed (0 without one), from the
/// cumulative key counts.
fn merge_widths(counts: &[u64], tables: &Tables) -> Vec<u8> {
    counts
        .windows(2)
        .map(|w| match crossing(w[0], w[1] - w[0], tables.k) {
            Some((_, fill, r)) if r > fill => tables.merge_width(fill, r - fill) as u8,
            _ => 0,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecSplitMkPhf {
    n: usize,
    config: RecSplitConfig,
    seed: u64,
    offsets: EliasFanoSeq,
    counts: EliasFanoSeq,
    stream: Vec<u64>,
    stream_len: usize,
    // derived
    tables: Tables,
    merge_w: Vec<u8>,
    num_buckets: u64,
    bucket_d: Deriver,
}

struct BucketWriter<'a> {
    tables: &'a Tables,
    global: u64,
    max_trials: u64,
    fixed: Vec<(u64, u32)>,
    unary: Vec<u64>,
}

impl BucketWriter<'_> {
    /// DFS over the tree; `keys` gets reordered by child.
    fn node(&mut self, keys: &mut [Key128], depth: u64) -> Result<()> {
        let c = split_tree_shape(keys.len(), self.tables.k, self.tables.ell);
        if c.is_empty() {
            return Ok(());
        }
        let g = self.global;
        let seed = find_split_seed(keys, &c, &|s| split_deriver(g, depth, s), self.max_trials).ok_or_else(|| {
            Error::Build(format!("no split seed for {} keys within {} trials", keys.len(), self.max_trials))
        })?;
        let w = self.tables.width[keys.len()];
        self.fixed.push((seed & mask(w), w));
        self.unary.push(seed >> w);
        let d = split_deriver(g, depth, seed);
        let s = keys.len() as u64;
        keys.sort_by_cached_key(|&h| child_of(d.range(h, s), &c));
        let mut start = 0;
        for &size in &c {
            self.node(&mut keys[start..start + size], depth + 1)?;
            start += size;
        }
        Ok(())
    }
}

pub fn num_buckets(n: usize, bucket_size: usize) -> u64 {
    (n as u64).div_ceil(bucket_size as u64).max(1)
}

impl RecSplitMkPhf {
    pub fn build(keys: &[Key128], config: &RecSplitConfig) -> Result<Self> {
        Self::build_with_trials(keys, config, MAX_TRIALS)
    }

    pub fn build_with_trials(keys: &[Key128], config: &RecSplitConfig, max_trials: u64) -> Result<Self> {
        check_keys(keys, config.k)?;
        if config.ell == 0 || config.bucket_size == 0 {
            return Err(Error::InvalidInput("ℓ and b must be positive".into()));
        }
        check_distinct(keys)?;
        let mut last_err = None;
        for attempt in 0..=GLOBAL_RETRIES {
            let seed = if attempt == 0 { config.seed } else { fmix64(config.seed ^ attempt) };
            match Self::build_once(keys, config, seed, max_trials) {
                Ok(f) => return Ok(f),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }

    fn build_once(keys: &[Key128], config: &RecSplitConfig, seed: u64, max_trials: u64) -> Result<Self> {
        let n = keys.len();
        let k = config.k as usize;
        let nb = num_buckets(n, config.bucket_size);
        let bucket_d = Deriver::new(tag::BUCKET, seed);
        let mut sorted: Vec<(u64, Key128)> = keys.iter().map(|&h| (bucket_d.range(h, nb), h)).collect();
        sorted.sort_unstable();
        let mut sizes = vec![0usize; nb as usize];
        for &(b, _) in &sorted {
            sizes[b as usize] += 1;
        }
        let max_size = sizes.iter().copied().max().unwrap_or(0);
        let tables = Tables::new(k, config.ell as usize, max_size);
        let mut buf = BitBuf::new();
        let mut offsets = Vec::with_capacity(nb as usize);
        let mut counts = Vec::with_capacity(nb as usize + 1);
        let mut x = 0usize;
        let mut start = 0usize;
        let mut bucket_keys = Vec::new();
        for &s in &sizes {
            offsets.push(buf.len() as u64);
            counts.push(x as u64);
            bucket_keys.clear();
            bucket_keys.extend(sorted[start..start + s].iter().map(|p| p.1));
            let mut wr =
                BucketWriter { tables: &tables, global: seed, max_trials, fixed: Vec::new(), unary: Vec::new() };
            wr.node(&mut bucket_keys, 0)?;
            // the short leaf is last in DFS order
            let r = s % k;
            let pending = x % k;
            if r > 0 && pending + r > k && pending > 0 {
                let fill = k - pending;
                let short = &bucket_keys[s - r..];
                let parts = [fill, r - fill];
                let ms = find_split_seed(short, &parts, &|t| merge_deriver(seed, t), max_trials)
                    .ok_or_else(|| Error::Build(format!("no merge seed for {r} keys within {max_trials} trials")))?;
                let w = tables.merge_width(fill, r - fill);
                wr.fixed.push((ms & mask(w), w));
                wr.unary.push(ms >> w);
            }
            for &(v, w) in &wr.fixed {
                buf.push_bits(v, w);
            }
            for &u in &wr.unary {
                push_unary(&mut buf, u);
            }
            x += s;
            start += s;
        }
        counts.push(x as u64);
        let (stream, stream_len) = buf.into_parts();
        let merge_w = merge_widths(&counts, &tables);
        Ok(Self {
            n,
            config: config.clone(),
            seed,
            offsets: EliasFanoSeq::new(&offsets)?,
            counts: EliasFanoSeq::new(&counts)?,
            stream,
            stream_len,
            tables,
            merge_w,
            num_buckets: nb,
            bucket_d,
        })
    }

    pub fn config(&self) -> &RecSplitConfig {
        &self.config
    }

    pub fn num_buckets(&self) -> u64 {
        self.num_buckets
    }

    /// Bits of the Rice coded seed stream.
    pub fn stream_bits(&self) -> usize {
        self.stream_len
    }

    fn bucket_crossing(&self, i: u64) -> Option<(u64, usize, usize)> {
        let mut it = self.counts.iter_from(i as usize);
        let x = it.next().unwrap();
        crossing(x, it.next().unwrap() - x, self.tables.k)
    }

    /// Bin of the next crossing bucket after `i`, or the last bin. `later`
    /// yields the key counts from bucket i + 1 on, `x` being the first.
    fn scan_forward(&self, i: u64, mut x: u64, mut later: impl Iterator<Item = u64>) -> u64 {
        for _ in i + 1..self.num_buckets {
            let y = later.next().unwrap();
            if let Some((bin, _, _)) = crossing(x, y - x, self.tables.k) {
                return bin;
            }
            x = y;
        }
        self.num_bins() - 1
    }

    /// Buckets visited by the forward scan for a short-leaf key (diagnostics).
    pub fn scan_length(&self, key: Key128) -> Option<u64> {
        let i = self.bucket_d.range(key, self.num_buckets);
        let q = self.query_impl(key);
        let x = self.counts.get(i as usize);
        let s = self.counts.get(i as usize + 1) - x;
        let k = self.config.k as u64;
        let full_end = x / k + s / k;
        if q < full_end {
            return None;
        }
        let mut j = i;
        while j < self.num_buckets && self.bucket_crossing(j).map(|c| c.0) != Some(q) {
            j += 1;
        }
        Some(j - i)
    }

    #[inline]
    fn query_impl(&self, key: Key128) -> u64 {
        let t = &self.tables;
        let k = t.k;
        let i = self.bucket_d.range(key, self.num_buckets);
        let mut counts = self.counts.iter_from(i as usize);
        let x0 = counts.next().unwrap();
        let x1 = counts.next().unwrap();
        let (x, size) = (x0 as usize, (x1 - x0) as usize);
        let start = self.offsets.get(i as usize) as usize;
        let crossing = crossing(x0, x1 - x0, k);
        let merge_w = self.merge_w[i as usize] as u32;
        let merge_fixed = merge_w as usize;
        let mut fixed = start;
        let mut unary = start + t.skip_fixed[size] as usize + merge_fixed;
        let words = &self.stream;
        let mut s = size;
        let mut left = 0usize;
        let mut depth = 0u64;
        loop {
            let node = shape(s, k, t.ell);
            if node == Shape::Leaf {
                break;
            }
            let w = t.width[s];
            let lo = read_bits(words, fixed, w);
            let (hi, next) = read_unary(words, unary);
            fixed += w as usize;
            unary = next;
            let seed = (hi << w) | lo;
            let pos = split_deriver(self.seed, depth, seed).range(key, s as u64) as usize;
            match node {
                // leaves of k keys occupy no stream bits
                Shape::Fanout { .. } => {
                    let j = pos / k;
                    left += j * k;
                    s = if (j + 1) * k <= s { k } else { s - j * k };
                }
                Shape::Binary { left: l } => {
                    if pos < l {
                        s = l;
                    } else {
                        fixed += t.skip_fixed[l] as usize;
                        unary = skip_ones(words, unary, t.nodes[l]);
                        left += l;
                        s -= l;
                    }
                }
                Shape::Leaf => unreachable!(),
            }
            depth += 1;
        }
        if s == k {
            return (x / k + left / k) as u64;
        }
        match crossing {
            Some((bin, fill, r)) => {
                if r == fill {
                    return bin;
                }
                let w = merge_w;
                let lo = read_bits(words, fixed, w);
                let (hi, _) = read_unary(words, unary);
                let ms = (hi << w) | lo;
                if child_of(merge_deriver(self.seed, ms).range(key, r as u64), &[fill, r - fill]) == 0 {
                    bin
                } else {
                    self.scan_forward(i, x1, counts)
                }
            }
            None => self.scan_forward(i, x1, counts),
        }
    }
}

impl Persist for RecSplitMkPhf {
    fn write(&self, w: &mut Writer) {
        w.put_u64(scheme::RECSPLIT);
        w.put_u64(self.n as u64);
        w.put_u64(self.config.k as u64);
        w.put_u64(self.config.bucket_size as u64);
        w.put_u64(self.config.ell as u64);
        w.put_u64(self.config.seed);
        w.put_u64(self.seed);
        self.offsets.write(w);
        self.counts.write(w);
        w.put_u64(self.stream_len as u64);
        w.put_words(&self.stream);
    }

    fn read(r: &mut Reader) -> Result<Self> {
        r.expect("recsplit scheme id", scheme::RECSPLIT)?;
        let n = r.get_usize()?;
        let k = r.get_u64()? as u32;
        let bucket_size = r.get_usize()?;
        let ell = r.get_u64()? as u32;
        let config_seed = r.get_u64()?;
        let seed = r.get_u64()?;
        if n == 0 || k == 0 || bucket_size == 0 || ell == 0 {
            return Err(Error::Format("recsplit header out of range".into()));
        }
        let offsets = EliasFanoSeq::read(r)?;
        let counts = EliasFanoSeq::read(r)?;
        let stream_len = r.get_usize()?;
        let stream = r.get_words(stream_len.div_ceil(64))?;
        let nb = num_buckets(n, bucket_size);
        if offsets.len() as u64 != nb || counts.len() as u64 != nb + 1 || counts.get(nb as usize) != n as u64 {
            return Err(Error::Format("recsplit directory does not match header".into()));
        }
        let max_size = (0..nb as usize).map(|i| counts.get(i + 1) - counts.get(i)).max().unwrap_or(0) as usize;
        let tables = Tables::new(k as usize, ell as usize, max_size);
        let merge_w = merge_widths(&counts.iter().collect::<Vec<_>>(), &tables);
        Ok(Self {
            n,
            config: RecSplitConfig { k, bucket_size, ell, seed: config_seed },
            seed,
            offsets,
            counts,
            stream,
            stream_len,
            merge_w,
            tables,
            num_buckets: nb,
            bucket_d: Deriver::new(tag::BUCKET, seed),
        })
    }
}

impl MkPhf for RecSplitMkPhf {
    fn query(&self, key: Key128) -> u64 {
        self.query_impl(key)
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::hash_key;
    use crate::phf::bin_capacity;

    #[test]
    fn width_walk_matches_exhaustive_argmin() {
        for i in 0..2000 {
            let ln_p = -(i as f64) * 0.02;
            let ln_q = (-ln_p.exp()).ln_1p();
            let cost = |l: u32| {
                let a = (ln_q * (1u64 << l) as f64).exp();
                l as f64 + 1.0 + a / (1.0 - a)
            };
            let best = (0..40).min_by(|&a, &b| cost(a).total_cmp(&cost(b))).unwrap();
            assert_eq!(optimal_width(ln_p), best, "ln p = {ln_p}");
        }
    }

    #[test]
    fn shapes() {
        assert!(split_tree_shape(8, 8, 3).is_empty());
        assert_eq!(split_tree_shape(24, 8, 3), vec![8, 8, 8]);
        assert_eq!(leaf_sizes(25, 8, 3), vec![8, 8, 8, 1]);
        assert_eq!(split_tree_shape(100, 10, 2), vec![80, 20]);
        assert_eq!(leaf_sizes(37, 10, 2), vec![10, 10, 10, 7]);
    }

    #[test]
    fn skipping_ones() {
        let words = [0b1011_0000u64, 1];
        assert_eq!(skip_ones(&words, 0, 1), 5);
        assert_eq!(skip_ones(&words, 5, 1), 6);
        assert_eq!(skip_ones(&words, 5, 2), 8);
        assert_eq!(skip_ones(&words, 5, 3), 65);
        assert_eq!(skip_ones(&words, 3, 0), 3);
    }

    #[test]
    fn bucket_streams_end_at_next_offset() {
        // fixed parts, then one unary code per seed, exactly fill each bucket's slice
        for (n, k, b) in [(5000usize, 10u32, 200usize), (3000, 7, 90), (4000, 100, 600)] {
            let keys: Vec<_> = (0..n as u32).map(|i| hash_key(&i.to_le_bytes(), 21)).collect();
            let f = RecSplitMkPhf::build(&keys, &RecSplitConfig::new(k, 2, b)).unwrap();
            let nb = f.num_buckets as usize;
            for i in 0..nb {
                let x = f.counts.get(i);
                let size = (f.counts.get(i + 1) - x) as usize;
                let merge = crossing(x, size as u64, f.tables.k).is_some_and(|(_, fill, r)| r > fill);
                let start = f.offsets.get(i) as usize;
                let unary = start + f.tables.skip_fixed[size] as usize + f.merge_w[i] as usize;
                let end = skip_ones(&f.stream, unary, f.tables.nodes[size] + merge as u64);
                let next = if i + 1 < nb { f.offsets.get(i + 1) as usize } else { f.stream_len };
                assert_eq!(end, next, "n={n} k={k} bucket {i}");
            }
        }
    }

    #[test]
    fn small_builds_are_minimal() {
        for (n, k, b) in
            [(1usize, 1u32, 10usize), (20, 10, 13), (1000, 10, 100), (997, 7, 50), (3000, 100, 400), (500, 2, 37)]
        {
            let keys: Vec<_> = (0..n as u32).map(|i| hash_key(&i.to_le_bytes(), 9)).collect();
            let f = RecSplitMkPhf::build(&keys, &RecSplitConfig::new(k, 2, b)).unwrap();
            let mut h = vec![0u32; f.num_bins() as usize];
            for &x in &keys {
                h[f.query(x) as usize] += 1;
            }
            for (bin, &c) in h.iter().enumerate() {
                assert_eq!(c, bin_capacity(n, k, bin as u64), "n={n} k={k} b={b} bin {bin}");
            }
            assert_eq!(RecSplitMkPhf::from_bytes(&f.to_bytes()).unwrap(), f);
        }
    }
}
