//! Threshold-based bumping MkPHF.
//!
//! Every layer is overloaded: n_ℓ remaining keys go into ⌈n_ℓ/(kγ)⌉ bins.
//! A bin stores one index into a threshold vector and keeps exactly the keys
//! whose fingerprint is at most that threshold; the rest are bumped to the
//! next layer. Layers are added while the bins used stay below ⌈n/k⌉. Keys
//! left over at the end are routed into the remaining empty slots through a
//! minimal 1-PHF and an Elias-Fano list of those slots.

pub mod consensus;
pub mod fallback;

use std::sync::Arc;

use crate::codec::{Persist, Reader, Writer};
use crate::error::{Error, Result};
use crate::hashing::{fmix64, tag, Deriver, Key128};
use crate::phf::{bin_capacity, check_distinct, check_keys, scheme, MkPhf};
use crate::retrieval::RetrievalFn;
use crate::succinct::bits::IntVec;
use crate::succinct::elias_fano::EliasFanoSeq;
use crate::threshold_opt::{cached_optimal_thresholds, ThresholdVector};

use consensus::{fingerprint_deriver, search_choices, state_before, LimitTable, STEP_BUDGET_PER_BIN};
use fallback::Fallback1Phf;

pub const MAX_LAYERS: usize = 64;
const LAYER_MIX: u64 = 0x9e37_79b9_7f4a_7c15;
const FALLBACK_MIX: u64 = 0xd6e8_feb8_6659_fd93;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Plain,
    /// 1-bit retrieval entries fill bins that the chosen threshold left short.
    Packed,
    /// Fingerprints chained to earlier choices; backtracking bounds empty slots.
    Consensus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerPolicy {
    /// Every layer overloaded by γ.
    Overload,
    /// Baseline: one overloaded layer, then a second one taking all remaining bins.
    TwoLayer,
}

impl Variant {
    fn id(self) -> u64 {
        match self {
            Variant::Plain => 0,
            Variant::Packed => 1,
            Variant::Consensus => 2,
        }
    }

    fn from_id(id: u64) -> Result<Self> {
        Ok(match id {
            0 => Variant::Plain,
            1 => Variant::Packed,
            2 => Variant::Consensus,
            _ => return Err(Error::Format(format!("unknown threshold variant {id}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdConfig {
    pub k: u32,
    pub gamma: f64,
    pub t: usize,
    pub variant: Variant,
    pub policy: LayerPolicy,
    pub seed: u64,
    pub max_layers: usize,
}

impl ThresholdConfig {
    pub fn new(k: u32, gamma: f64, t: usize) -> Self {
        Self { k, gamma, t, variant: Variant::Plain, policy: LayerPolicy::Overload, seed: 0, max_layers: MAX_LAYERS }
    }

    pub fn variant(mut self, v: Variant) -> Self {
        self.variant = v;
        self
    }

    pub fn policy(mut self, p: LayerPolicy) -> Self {
        self.policy = p;
        self
    }

    pub fn seed(mut self, s: u64) -> Self {
        self.seed = s;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidInput(format!("γ must be > 1 (got {})", self.gamma)));
        }
        if self.t < 2 || !self.t.is_power_of_two() || self.t > 1 << 16 {
            return Err(Error::InvalidInput(format!("t must be a power of two in [2, 65536] (got {})", self.t)));
        }
        if self.max_layers == 0 || self.max_layers > MAX_LAYERS {
            return Err(Error::InvalidInput(format!("max_layers must be in [1, {MAX_LAYERS}]")));
        }
        Ok(())
    }
}

/// Largest index with T_i < x_{k+1} (x_{k+1} = ∞ for at most k keys), the
/// kept fingerprints (≤ T_index) and the bumped ones.
pub fn select_threshold_for_bin(fingerprints: &[f64], k: u32, tv: &ThresholdVector) -> (usize, Vec<f64>, Vec<f64>) {
    let mut fps = fingerprints.to_vec();
    let idx = select_index(&mut fps, k as usize, tv);
    let (kept, bumped) = fingerprints.iter().partition(|&&x| x <= tv.get(idx));
    (idx, kept, bumped)
}

/// Quickselect for x_{cap+1}; reorders `fps`.
fn select_index(fps: &mut [f64], cap: usize, tv: &ThresholdVector) -> usize {
    if fps.len() <= cap {
        return tv.t() - 1;
    }
    let (_, x, _) = fps.select_nth_unstable_by(cap, f64::total_cmp);
    tv.largest_below(*x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinDecision {
    /// Fingerprint ≤ T_index.
    Kept,
    /// In the packing window (T_index, T_index+1]; the bit says keep.
    Stored(bool),
    Bumped,
}

/// Threshold index and per-key outcome for one bin. With `pack`, the
/// smallest fingerprints of the window above the chosen threshold fill the
/// bin up to `cap`; every window key gets a retrieval bit, since the
/// retrieval structure answers arbitrarily for keys it does not store.
pub fn bin_decisions(fingerprints: &[f64], cap: u32, tv: &ThresholdVector, pack: bool) -> (usize, Vec<BinDecision>) {
    let mut scratch = fingerprints.to_vec();
    let i = select_index(&mut scratch, cap as usize, tv);
    let lo = tv.get(i);
    let packing = pack && i + 1 < tv.t();
    let hi = if packing { tv.get(i + 1) } else { lo };
    let mut out: Vec<BinDecision> = fingerprints
        .iter()
        .map(|&x| {
            if x <= lo {
                BinDecision::Kept
            } else if x <= hi {
                BinDecision::Stored(false)
            } else {
                BinDecision::Bumped
            }
        })
        .collect();
    if packing {
        let kept = out.iter().filter(|d| **d == BinDecision::Kept).count();
        let mut window: Vec<usize> = (0..out.len()).filter(|&j| out[j] == BinDecision::Stored(false)).collect();
        window.sort_unstable_by(|&a, &b| fingerprints[a].total_cmp(&fingerprints[b]));
        for &j in window.iter().take(cap as usize - kept) {
            out[j] = BinDecision::Stored(true);
        }
    }
    (i, out)
}

#[derive(Clone, Debug, PartialEq)]
struct Layer {
    bins: u64,
    offset: u64,
    choices: IntVec,
    pack: Option<RetrievalFn>,
    // derived
    seed: u64,
    bin_d: Deriver,
    fp_d: Deriver,
}

fn layer_seed(global: u64, layer: usize) -> u64 {
    fmix64(global ^ (layer as u64 + 1).wrapping_mul(LAYER_MIX))
}

impl Layer {
    fn new(global: u64, index: usize, bins: u64, offset: u64, choices: IntVec, pack: Option<RetrievalFn>) -> Self {
        let seed = layer_seed(global, index);
        Self {
            bins,
            offset,
            choices,
            pack,
            seed,
            bin_d: Deriver::new(tag::BIN, seed),
            fp_d: Deriver::new(tag::FINGERPRINT, seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdMkPhf {
    n: usize,
    config: ThresholdConfig,
    tv: Arc<ThresholdVector>,
    layers: Vec<Layer>,
    slots: EliasFanoSeq,
    fallback: Fallback1Phf,
}

/// Keys of a layer grouped by bin (counting sort).
fn group_by_bin(keys: &[Key128], d: Deriver, bins: u64) -> (Vec<Key128>, Vec<usize>) {
    let bin_of: Vec<u32> = keys.iter().map(|&h| d.range(h, bins) as u32).collect();
    let mut start = vec![0usize; bins as usize + 1];
    for &b in &bin_of {
        start[b as usize + 1] += 1;
    }
    for i in 0..bins as usize {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut grouped = vec![Key128::default(); keys.len()];
    for (&h, &b) in keys.iter().zip(&bin_of) {
        grouped[fill[b as usize]] = h;
        fill[b as usize] += 1;
    }
    (grouped, start)
}

impl ThresholdMkPhf {
    pub fn build(keys: &[Key128], config: &ThresholdConfig) -> Result<Self> {
        check_keys(keys, config.k)?;
        config.validate()?;
        check_distinct(keys)?;
        let tv = cached_optimal_thresholds(config.k, config.gamma, config.t)?;
        let n = keys.len();
        let k = config.k;
        let m = (n as u64).div_ceil(k as u64);
        let width = config.t.trailing_zeros();
        let mut deficit: Vec<u32> = (0..m).map(|b| bin_capacity(n, k, b)).collect();
        let mut rest = keys.to_vec();
        let mut layers = Vec::new();
        let mut used = 0u64;
        while used < m && !rest.is_empty() && layers.len() < config.max_layers {
            let index = layers.len();
            let mut bins = ((rest.len() as f64 / (k as f64 * config.gamma)).ceil() as u64).max(1);
            if config.policy == LayerPolicy::TwoLayer && index == 1 {
                bins = m - used;
            }
            let bins = bins.min(m - used);
            let seed = layer_seed(config.seed, index);
            let (grouped, start) = group_by_bin(&rest, Deriver::new(tag::BIN, seed), bins);
            let caps: Vec<u32> = (0..bins).map(|b| bin_capacity(n, k, used + b)).collect();
            let mut next = Vec::new();
            let (choices, pack) = match config.variant {
                Variant::Plain | Variant::Packed => {
                    let fp_d = Deriver::new(tag::FINGERPRINT, seed);
                    let mut idx = vec![0u64; bins as usize];
                    let mut pairs = Vec::new();
                    let mut fps = Vec::new();
                    let pack = config.variant == Variant::Packed;
                    for b in 0..bins as usize {
                        let group = &grouped[start[b]..start[b + 1]];
                        fps.clear();
                        fps.extend(group.iter().map(|&h| fp_d.unit(h)));
                        let (i, decisions) = bin_decisions(&fps, caps[b], &tv, pack);
                        idx[b] = i as u64;
                        let mut kept = 0u32;
                        for (&h, d) in group.iter().zip(decisions) {
                            match d {
                                BinDecision::Kept => kept += 1,
                                BinDecision::Stored(keep) => {
                                    pairs.push((h, keep as u8));
                                    if keep {
                                        kept += 1;
                                    } else {
                                        next.push(h);
                                    }
                                }
                                BinDecision::Bumped => next.push(h),
                            }
                        }
                        deficit[(used + b as u64) as usize] -= kept;
                    }
                    let pack = match config.variant {
                        Variant::Packed => Some(RetrievalFn::build(&pairs, 1, fmix64(seed ^ tag::RETRIEVAL as u64))?),
                        _ => None,
                    };
                    (IntVec::from_slice(&idx, width), pack)
                }
                Variant::Consensus => {
                    let groups: Vec<&[Key128]> = (0..bins as usize).map(|b| &grouped[start[b]..start[b + 1]]).collect();
                    let mut table = LimitTable::new(&tv, width);
                    let (words, _) = search_choices(
                        &groups,
                        &caps,
                        &tv,
                        seed,
                        &mut |s, c| table.get(s, c),
                        STEP_BUDGET_PER_BIN * bins,
                    )
                    .map_err(|e| Error::Build(format!("layer {index}: {e}")))?;
                    let choices = IntVec::from_raw(width, bins as usize, words);
                    for (b, group) in groups.iter().enumerate() {
                        let d = fingerprint_deriver(seed, b, state_before(choices.raw_words(), b, width));
                        let cut = tv.get(choices.get(b) as usize);
                        let mut kept = 0;
                        for &h in *group {
                            if d.unit(h) <= cut {
                                kept += 1;
                            } else {
                                next.push(h);
                            }
                        }
                        deficit[(used + b as u64) as usize] -= kept;
                    }
                    (choices, None)
                }
            };
            layers.push(Layer::new(config.seed, index, bins, used, choices, pack));
            used += bins;
            rest = next;
        }
        let mut slots = Vec::with_capacity(rest.len());
        for (b, &d) in deficit.iter().enumerate() {
            slots.extend(std::iter::repeat_n(b as u64, d as usize));
        }
        if slots.len() != rest.len() {
            return Err(Error::Build(format!("{} empty slots for {} residual keys", slots.len(), rest.len())));
        }
        let fallback = Fallback1Phf::build(&rest, fmix64(config.seed ^ FALLBACK_MIX))?;
        Ok(Self { n, config: config.clone(), tv, layers, slots: EliasFanoSeq::new(&slots)?, fallback })
    }

    pub fn config(&self) -> &ThresholdConfig {
        &self.config
    }

    pub fn thresholds(&self) -> &ThresholdVector {
        &self.tv
    }

    /// Keys that no layer kept.
    pub fn fallback_keys(&self) -> usize {
        self.fallback.len()
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_bins(&self) -> Vec<u64> {
        self.layers.iter().map(|l| l.bins).collect()
    }

    /// Total retrieval entries of the packed variant.
    pub fn packed_entries(&self) -> usize {
        self.layers.iter().filter_map(|l| l.pack.as_ref()).map(|p| p.len()).sum()
    }

    pub fn choice(&self, layer: usize, bin: usize) -> u64 {
        self.layers[layer].choices.get(bin)
    }

    /// Overwrites one stored threshold index (for mutation experiments).
    pub fn override_choice(&mut self, layer: usize, bin: usize, value: u64) {
        self.layers[layer].choices.set(bin, value);
    }

    #[inline]
    fn query_impl(&self, h: Key128) -> u64 {
        let t = self.tv.t();
        let width = t.trailing_zeros();
        for l in &self.layers {
            let b = l.bin_d.range(h, l.bins);
            let i = l.choices.get(b as usize) as usize;
            let x = match self.config.variant {
                Variant::Consensus => {
                    fingerprint_deriver(l.seed, b as usize, state_before(l.choices.raw_words(), b as usize, width))
                        .unit(h)
                }
                _ => l.fp_d.unit(h),
            };
            if x <= self.tv.get(i) {
                return l.offset + b;
            }
            if let Some(p) = &l.pack {
                if i + 1 < t && x <= self.tv.get(i + 1) && p.query(h) == 1 {
                    return l.offset + b;
                }
            }
        }
        if self.slots.is_empty() {
            return 0;
        }
        self.slots.get(self.fallback.query(h).min(self.slots.len() - 1))
    }
}

const LAYER_TAG: u64 = u64::from_le_bytes(*b"THRLAYER");

impl Persist for ThresholdMkPhf {
    fn write(&self, w: &mut Writer) {
        let c = &self.config;
        w.put_u64(scheme::THRESHOLD);
        w.put_u64(self.n as u64);
        w.put_u64(c.k as u64);
        w.put_f64(c.gamma);
        w.put_u64(c.t as u64);
        w.put_u64(c.variant.id());
        w.put_u64((c.policy == LayerPolicy::TwoLayer) as u64);
        w.put_u64(c.max_layers as u64);
        w.put_u64(c.seed);
        w.put_u64(self.layers.len() as u64);
        for l in &self.layers {
            w.put_u64(LAYER_TAG);
            w.put_u64(l.bins);
            l.choices.write(w);
            if let Some(p) = &l.pack {
                p.write(w);
            }
        }
        self.slots.write(w);
        self.fallback.write(w);
    }

    fn read(r: &mut Reader) -> Result<Self> {
        r.expect("threshold scheme id", scheme::THRESHOLD)?;
        let n = r.get_usize()?;
        let k = r.get_u64()? as u32;
        let gamma = r.get_f64()?;
        let t = r.get_usize()?;
        let variant = Variant::from_id(r.get_u64()?)?;
        let policy = if r.get_u64()? == 1 { LayerPolicy::TwoLayer } else { LayerPolicy::Overload };
        let max_layers = r.get_usize()?;
        let seed = r.get_u64()?;
        let config = ThresholdConfig { k, gamma, t, variant, policy, seed, max_layers };
        config.validate().map_err(|e| Error::Format(e.to_string()))?;
        if k == 0 || n == 0 {
            return Err(Error::Format("threshold header has n = 0 or k = 0".into()));
        }
        let tv = cached_optimal_thresholds(k, gamma, t)?;
        let count = r.get_usize()?;
        if count > MAX_LAYERS {
            return Err(Error::Format(format!("{count} layers")));
        }
        let m = (n as u64).div_ceil(k as u64);
        let mut layers = Vec::with_capacity(count);
        let mut used = 0u64;
        for index in 0..count {
            r.expect("threshold layer tag", LAYER_TAG)?;
            let bins = r.get_u64()?;
            let choices = IntVec::read(r)?;
            if bins == 0 || used + bins > m || choices.len() as u64 != bins || choices.width() != t.trailing_zeros() {
                return Err(Error::Format(format!("threshold layer {index} inconsistent")));
            }
            let pack = match variant {
                Variant::Packed => Some(RetrievalFn::read(r)?),
                _ => None,
            };
            layers.push(Layer::new(seed, index, bins, used, choices, pack));
            used += bins;
        }
        let slots = EliasFanoSeq::read(r)?;
        let fallback = Fallback1Phf::read(r)?;
        if slots.len() != fallback.len() || slots.iter().last().is_some_and(|s| s >= m) {
            return Err(Error::Format("slot list does not match fallback".into()));
        }
        Ok(Self { n, config, tv, layers, slots, fallback })
    }
}

impl MkPhf for ThresholdMkPhf {
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
