//! Consensus-coded threshold choices.
//!
//! Fingerprints of bin b are derived from the layer seed, b, and the last 64
//! bits of choices already made in the layer. Picking a different (still
//! acceptable) threshold in an earlier bin therefore re-rolls the
//! fingerprints of the bins after it, which lets a depth-first search insist
//! on a tight bound of empty slots per bin.

use std::collections::HashMap;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::hashing::{fmix64, tag, Deriver, Key128};
use crate::succinct::bits::{mask, read_bits};
use crate::threshold_opt::ThresholdVector;

pub const STEP_BUDGET_PER_BIN: u64 = 10_000;
const STATE_MIX: u64 = 0x94d0_49bb_1331_11eb;
const BIN_MIX: u64 = 0x2127_599b_f432_5c37;

/// Smallest L such that, for `bin_size` uniform fingerprints, the expected
/// number of threshold indices leaving at most L empty slots without
/// exceeding `cap` kept keys is at least one. Only the first 2^bits_per_bin
/// thresholds count as choices.
pub fn consensus_accept_limit(bin_size: usize, cap: u32, tv: &ThresholdVector, bits_per_bin: u32) -> u32 {
    let cap_us = cap as usize;
    if bin_size <= cap_us {
        return (cap_us - bin_size) as u32;
    }
    let choices = tv.t().min(1usize << bits_per_bin.min(32));
    let ln_fact = |m: usize| ln_gamma(m as f64 + 1.0);
    let s = bin_size;
    let pmf = |p: f64, j: usize| -> f64 {
        if p >= 1.0 {
            return (j == s) as u8 as f64;
        }
        if p <= 0.0 {
            return (j == 0) as u8 as f64;
        }
        (ln_fact(s) - ln_fact(j) - ln_fact(s - j) + j as f64 * p.ln() + (s - j) as f64 * (-p).ln_1p()).exp()
    };
    let mut expected = 0.0;
    for l in 0..=cap {
        let j = cap_us - l as usize;
        expected += tv.thresholds[..choices].iter().map(|&p| pmf(p, j)).sum::<f64>();
        if expected >= 1.0 {
            return l;
        }
    }
    cap
}

/// Previous choices visible to bin b: up to 64 bits ending at b·width.
#[inline]
pub fn state_before(words: &[u64], bin: usize, width: u32) -> u64 {
    let end = bin * width as usize;
    let len = end.min(64);
    if len == 0 {
        0
    } else {
        read_bits(words, end - len, len as u32)
    }
}

#[inline]
pub fn fingerprint_deriver(layer_seed: u64, bin: usize, state: u64) -> Deriver {
    let s = layer_seed ^ fmix64((bin as u64).wrapping_add(1).wrapping_mul(BIN_MIX)) ^ state.wrapping_mul(STATE_MIX);
    Deriver::new(tag::FINGERPRINT, fmix64(s))
}

fn write_choice(words: &mut [u64], bin: usize, width: u32, v: u64) {
    let pos = bin * width as usize;
    let (wi, off) = (pos / 64, pos % 64);
    words[wi] = (words[wi] & !(mask(width) << off)) | (v << off);
    if off + width as usize > 64 {
        let hi = off + width as usize - 64;
        words[wi + 1] = (words[wi + 1] & !mask(hi as u32)) | (v >> (64 - off));
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub steps: u64,
    pub backtracks: u64,
    pub restarts: u64,
}

/// Depth-first assignment of one threshold index per bin. `groups[b]` holds
/// the keys of bin b, `caps[b]` its capacity, `limit(size, cap)` the accepted
/// number of empty slots. Returns the packed choice words (width bits each).
///
/// The limits hold only in expectation, so a short layer can run out of
/// alternatives entirely; the search then restarts with every limit raised
/// by one. All restarts share the step budget.
pub fn search_choices(
    groups: &[&[Key128]],
    caps: &[u32],
    tv: &ThresholdVector,
    layer_seed: u64,
    limit: &mut dyn FnMut(usize, u32) -> u32,
    budget: u64,
) -> Result<(Vec<u64>, SearchStats)> {
    let mut stats = SearchStats::default();
    let max_cap = caps.iter().copied().max().unwrap_or(0);
    for slack in 0..=max_cap {
        if let Some(words) =
            search_once(groups, caps, tv, layer_seed, &mut |s, c| limit(s, c) + slack, budget, &mut stats)?
        {
            return Ok((words, stats));
        }
        stats.restarts += 1;
    }
    Err(Error::Build(format!("consensus search exhausted all choices ({} bins)", groups.len())))
}

fn search_once(
    groups: &[&[Key128]],
    caps: &[u32],
    tv: &ThresholdVector,
    layer_seed: u64,
    limit: &mut dyn FnMut(usize, u32) -> u32,
    budget: u64,
    stats: &mut SearchStats,
) -> Result<Option<Vec<u64>>> {
    let bins = groups.len();
    let t = tv.t();
    let width = t.trailing_zeros();
    let mut words = vec![0u64; (bins * width as usize).div_ceil(64)];
    // lowest acceptable choice for every bin on the current path
    let mut lowest = vec![0u32; bins];
    let mut choice = vec![0u32; bins];
    let mut fps = Vec::new();
    let mut b = 0usize;
    while b < bins {
        stats.steps += 1;
        if stats.steps > budget {
            return Err(Error::Build(format!(
                "consensus search exceeded {budget} steps at bin {b} of {bins} ({} backtracks)",
                stats.backtracks
            )));
        }
        let d = fingerprint_deriver(layer_seed, b, state_before(&words, b, width));
        let cap = caps[b];
        fps.clear();
        fps.extend(groups[b].iter().map(|&h| d.unit(h)));
        let allowed = limit(fps.len(), cap);
        let range = acceptable(&mut fps, cap, tv, allowed);
        if let Some((lo, hi)) = range {
            lowest[b] = lo;
            choice[b] = hi;
            write_choice(&mut words, b, width, hi as u64);
            b += 1;
            continue;
        }
        // no acceptable threshold: take the next alternative of the nearest earlier bin that has one
        stats.backtracks += 1;
        loop {
            if b == 0 {
                return Ok(None);
            }
            b -= 1;
            if choice[b] > lowest[b] {
                choice[b] -= 1;
                write_choice(&mut words, b, width, choice[b] as u64);
                b += 1;
                break;
            }
        }
    }
    Ok(Some(words))
}

/// Range [lo, hi] of threshold indices that keep at most `cap` keys and leave
/// at most `allowed` empty slots; None when even the best one fails.
fn acceptable(fps: &mut [f64], cap: u32, tv: &ThresholdVector, allowed: u32) -> Option<(u32, u32)> {
    let t = tv.t();
    let cap = cap as usize;
    if fps.len() <= cap {
        return ((cap - fps.len()) as u32 <= allowed).then_some(((t - 1) as u32, (t - 1) as u32));
    }
    fps.sort_unstable_by(f64::total_cmp);
    let hi = tv.largest_below(fps[cap]);
    let empties = |c: usize| cap - fps.partition_point(|&x| x <= tv.thresholds[c]);
    if empties(hi) as u32 > allowed {
        return None;
    }
    let mut lo = hi;
    while lo > 0 && empties(lo - 1) as u32 <= allowed {
        lo -= 1;
    }
    Some((lo as u32, hi as u32))
}

/// Accept limits memoized per (bin size, capacity).
pub struct LimitTable<'a> {
    tv: &'a ThresholdVector,
    bits: u32,
    memo: HashMap<(usize, u32), u32>,
}

impl<'a> LimitTable<'a> {
    pub fn new(tv: &'a ThresholdVector, bits: u32) -> Self {
        Self { tv, bits, memo: HashMap::new() }
    }

    pub fn get(&mut self, size: usize, cap: u32) -> u32 {
        let (tv, bits) = (self.tv, self.bits);
        *self.memo.entry((size, cap)).or_insert_with(|| consensus_accept_limit(size, cap, tv, bits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn underfull_and_exact_bins() {
        let tv = ThresholdVector { k: 10, gamma: 2.0, thresholds: vec![0.0, 0.4, 0.7, 1.0] };
        assert_eq!(consensus_accept_limit(3, 10, &tv, 2), 7);
        assert_eq!(consensus_accept_limit(10, 10, &tv, 2), 0);
        assert!(consensus_accept_limit(25, 10, &tv, 2) <= 10);
    }

    #[test]
    fn choice_packing() {
        let mut words = vec![0u64; 3];
        for b in 0..20 {
            write_choice(&mut words, b, 7, (b as u64 * 37) & 127);
        }
        for b in 0..20 {
            assert_eq!(read_bits(&words, b * 7, 7), (b as u64 * 37) & 127);
        }
        assert_eq!(state_before(&words, 0, 7), 0);
        assert_eq!(state_before(&words, 1, 7), 0);
        assert_eq!(state_before(&words, 2, 7), 37 << 7);
    }
}
