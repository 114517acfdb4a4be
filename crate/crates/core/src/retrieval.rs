//! Static r-bit retrieval: f(key) returns the value stored at build time,
//! arbitrary bits for other keys.
//!
//! Keys are split into chunks of about 4096. Each chunk solves a ribbon
//! system over GF(2): a key contributes one equation whose 64 coefficients
//! start at a hashed column. Elimination runs on the fly while rows are
//! inserted; a chunk whose system is singular is retried with the next seed.

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::hashing::{fastrange, fmix64, tag, Deriver, Key128};
use crate::succinct::bits::{read_bits, BitBuf, IntVec};

pub const RIBBON_WIDTH: usize = 64;
pub const CHUNK_TARGET: usize = 1 << 12;
pub const MAX_ATTEMPTS: u64 = 64;
const SLACK: f64 = 0.05;
const TAG: u64 = u64::from_le_bytes(*b"RETRV\0\x01\0");
const COEFF_MIX: u64 = 0x2545_f491_4f6c_dd1d;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RetrievalFn {
    r: u32,
    n: usize,
    seed: u64,
    // column offset of each chunk, plus the total
    offsets: IntVec,
    attempts: IntVec,
    // one solution bit array per value bit, each `columns` long (+ padding word)
    solution: Vec<Vec<u64>>,
}

/// Columns allotted to a chunk with `size` keys.
pub fn chunk_columns(size: usize) -> usize {
    if size == 0 {
        return 0;
    }
    ((size as f64 * (1.0 + SLACK)).ceil() as usize + 16).max(RIBBON_WIDTH)
}

#[inline]
fn row(h: Key128, seed: u64, attempt: u64, columns: usize) -> (usize, u64) {
    let v = Deriver::new(tag::RETRIEVAL, fmix64(seed ^ attempt.wrapping_mul(COEFF_MIX)) ^ attempt).derive(h);
    let start = fastrange(v, (columns - RIBBON_WIDTH + 1) as u64) as usize;
    (start, fmix64(v ^ COEFF_MIX) | 1)
}

#[inline]
fn chunk_of(h: Key128, seed: u64, chunks: usize) -> usize {
    Deriver::new(tag::RETRIEVAL, seed).range(h, chunks as u64) as usize
}

fn solve_chunk(pairs: &[(Key128, u8)], r: u32, seed: u64, attempt: u64, columns: usize) -> Option<Vec<Vec<u64>>> {
    let mut coeff = vec![0u64; columns];
    let mut rhs = vec![0u8; columns];
    for &(h, value) in pairs {
        let (mut s, mut c) = row(h, seed, attempt, columns);
        let mut v = value;
        loop {
            if coeff[s] == 0 {
                coeff[s] = c;
                rhs[s] = v;
                break;
            }
            c ^= coeff[s];
            v ^= rhs[s];
            if c == 0 {
                if v == 0 {
                    break;
                }
                return None;
            }
            let tz = c.trailing_zeros();
            s += tz as usize;
            c >>= tz;
        }
    }
    let words = columns.div_ceil(64) + 1;
    let mut sol = vec![vec![0u64; words]; r as usize];
    for i in (0..columns).rev() {
        let c = coeff[i];
        if c == 0 {
            continue;
        }
        for (b, bits) in sol.iter_mut().enumerate() {
            let window = read_bits(bits, i, 64);
            let bit = ((rhs[i] >> b) & 1) as u32 ^ ((c & window).count_ones() & 1);
            bits[i / 64] |= (bit as u64) << (i % 64);
        }
    }
    Some(sol)
}

impl RetrievalFn {
    pub fn build(pairs: &[(Key128, u8)], r: u32, seed: u64) -> Result<Self> {
        if !(1..=8).contains(&r) {
            return Err(Error::InvalidInput(format!("retrieval width r = {r} outside 1..=8")));
        }
        if let Some(&(_, v)) = pairs.iter().find(|p| r < 8 && p.1 >> r != 0) {
            return Err(Error::InvalidInput(format!("value {v} exceeds {r} bits")));
        }
        let n = pairs.len();
        let chunks = n.div_ceil(CHUNK_TARGET);
        let mut counts = vec![0usize; chunks + 1];
        let chunk_ids: Vec<usize> = pairs.iter().map(|p| chunk_of(p.0, seed, chunks)).collect();
        for &c in &chunk_ids {
            counts[c + 1] += 1;
        }
        for i in 0..chunks {
            counts[i + 1] += counts[i];
        }
        let mut grouped = vec![(Key128::default(), 0u8); n];
        let mut fill = counts.clone();
        for (p, &c) in pairs.iter().zip(&chunk_ids) {
            grouped[fill[c]] = *p;
            fill[c] += 1;
        }

        let mut offsets = Vec::with_capacity(chunks + 1);
        let mut attempts = Vec::with_capacity(chunks);
        let mut total = 0usize;
        let mut parts = Vec::with_capacity(chunks);
        for c in 0..chunks {
            let group = &mut grouped[counts[c]..counts[c + 1]];
            group.sort_unstable_by_key(|p| p.0);
            if let Some(w) = group.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidInput(format!("duplicate key {:?}", w[0].0)));
            }
            let columns = chunk_columns(group.len());
            let (attempt, sol) = (0..MAX_ATTEMPTS)
                .find_map(|a| solve_chunk(group, r, seed, a, columns).map(|s| (a, s)))
                .ok_or_else(|| {
                    Error::Build(format!(
                        "retrieval chunk {c} ({} keys) unsolvable after {MAX_ATTEMPTS} seeds",
                        group.len()
                    ))
                })?;
            offsets.push(total as u64);
            attempts.push(attempt);
            parts.push((columns, sol));
            total += columns;
        }
        offsets.push(total as u64);

        let mut solution = Vec::with_capacity(r as usize);
        for b in 0..r as usize {
            let mut buf = BitBuf::with_capacity(total + 64);
            for (columns, sol) in &parts {
                let bits = &sol[b];
                let mut done = 0;
                while done < *columns {
                    let w = (*columns - done).min(64) as u32;
                    buf.push_bits(read_bits(bits, done, w), w);
                    done += w as usize;
                }
            }
            let (mut words, _) = buf.into_parts();
            words.resize(total.div_ceil(64) + 1, 0);
            solution.push(words);
        }
        Ok(Self {
            r,
            n,
            seed,
            offsets: IntVec::minimal(&offsets, 1),
            attempts: IntVec::minimal(&attempts, 1),
            solution,
        })
    }

    #[inline]
    pub fn query(&self, h: Key128) -> u8 {
        let chunks = self.attempts.len();
        if chunks == 0 {
            return 0;
        }
        let c = chunk_of(h, self.seed, chunks);
        let base = self.offsets.get(c) as usize;
        let columns = self.offsets.get(c + 1) as usize - base;
        let (s, coeff) = row(h, self.seed, self.attempts.get(c), columns);
        let mut v = 0u8;
        for (b, bits) in self.solution.iter().enumerate() {
            let window = read_bits(bits, base + s, 64);
            v |= (((coeff & window).count_ones() & 1) as u8) << b;
        }
        v
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn width(&self) -> u32 {
        self.r
    }

    fn columns(&self) -> usize {
        if self.offsets.is_empty() {
            0
        } else {
            self.offsets.get(self.offsets.len() - 1) as usize
        }
    }

    pub fn write(&self, w: &mut Writer) {
        w.put_u64(TAG);
        w.put_u64(self.r as u64);
        w.put_u64(self.n as u64);
        w.put_u64(self.seed);
        self.offsets.write(w);
        self.attempts.write(w);
        let stored = self.columns().div_ceil(64);
        for bits in &self.solution {
            w.put_words(&bits[..stored]);
        }
    }

    pub fn read(r: &mut Reader) -> Result<Self> {
        r.expect("retrieval tag", TAG)?;
        let width = r.get_u64()? as u32;
        if !(1..=8).contains(&width) {
            return Err(Error::Format(format!("retrieval width {width}")));
        }
        let n = r.get_usize()?;
        let seed = r.get_u64()?;
        let offsets = IntVec::read(r)?;
        let attempts = IntVec::read(r)?;
        if offsets.len() != attempts.len() + 1 || attempts.len() != n.div_ceil(CHUNK_TARGET) {
            return Err(Error::Format("retrieval chunk table inconsistent".into()));
        }
        let mut f = Self { r: width, n, seed, offsets, attempts, solution: Vec::new() };
        let stored = f.columns().div_ceil(64);
        for _ in 0..width {
            let mut words = r.get_words(stored)?;
            words.push(0);
            f.solution.push(words);
        }
        Ok(f)
    }

    pub fn size_bits(&self) -> u64 {
        let mut w = Writer::counting();
        self.write(&mut w);
        w.len() as u64 * 8
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::hash_key;

    #[test]
    fn empty_function() {
        let f = RetrievalFn::build(&[], 1, 1).unwrap();
        assert!(f.query(hash_key(b"x", 0)) <= 1);
        assert!(f.size_bits() < 1024);
    }

    #[test]
    fn three_keys() {
        let pairs: Vec<_> = [b"a", b"b", b"c"].iter().zip([0u8, 1, 1]).map(|(k, v)| (hash_key(*k, 3), v)).collect();
        let f = RetrievalFn::build(&pairs, 1, 9).unwrap();
        for &(k, v) in &pairs {
            assert_eq!(f.query(k), v);
        }
    }

    #[test]
    fn duplicate_keys_rejected() {
        let k = hash_key(b"dup", 0);
        assert!(RetrievalFn::build(&[(k, 0), (k, 0)], 1, 0).is_err());
    }

    #[test]
    fn multi_bit_values() {
        let pairs: Vec<_> = (0..20_000u32).map(|i| (hash_key(&i.to_le_bytes(), 1), (i * 37 % 251) as u8)).collect();
        let f = RetrievalFn::build(&pairs, 8, 5).unwrap();
        assert!(pairs.iter().all(|&(k, v)| f.query(k) == v));
        let bytes = {
            let mut w = Writer::new();
            f.write(&mut w);
            w.into_bytes()
        };
        assert_eq!(bytes.len() as u64 * 8, f.size_bits());
        let back = RetrievalFn::read(&mut Reader::new(&bytes)).unwrap();
        assert_eq!(back, f);
    }
}
