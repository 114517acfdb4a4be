use super::bits::{BitBuf, IntVec};
use super::bitvec::BitVec;
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

const TAG: u64 = u64::from_le_bytes(*b"EFSEQ\0\x01\0");

/// Elias-Fano coded non-decreasing sequence.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EliasFanoSeq {
    n: usize,
    low_bits: u32,
    lower: IntVec,
    upper: BitVec,
}

/// Lower width ⌈log2(a_{n−1}/n)⌉, i.e. the smallest L with n·2^L ≥ a_{n−1}.
pub fn lower_width(n: usize, last: u64) -> u32 {
    if n == 0 {
        return 0;
    }
    let mut l = 0;
    while l < 63 && ((n as u128) << l) < last as u128 {
        l += 1;
    }
    l
}

impl EliasFanoSeq {
    pub fn new(values: &[u64]) -> Result<Self> {
        if let Some(i) = values.windows(2).position(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput(format!(
                "sequence decreases at index {}: {} > {}",
                i + 1,
                values[i],
                values[i + 1]
            )));
        }
        let n = values.len();
        let last = values.last().copied().unwrap_or(0);
        let l = lower_width(n, last);
        let lows: Vec<u64> = values.iter().map(|&v| v & super::bits::mask(l)).collect();
        let upper_len = n + (last >> l) as usize + 1;
        let mut upper = BitBuf::zeroed(if n == 0 { 0 } else { upper_len });
        for (i, &v) in values.iter().enumerate() {
            upper.set((v >> l) as usize + i);
        }
        Ok(Self { n, low_bits: l, lower: IntVec::from_slice(&lows, l), upper: upper.into() })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn low_bits(&self) -> u32 {
        self.low_bits
    }

    #[inline]
    pub fn get(&self, i: usize) -> u64 {
        debug_assert!(i < self.n);
        let high = (self.upper.sel1(i) - i) as u64;
        (high << self.low_bits) | self.lower.get(i)
    }

    pub fn access(&self, i: usize) -> Result<u64> {
        if i >= self.n {
            return Err(Error::OutOfRange { index: i, len: self.n });
        }
        Ok(self.get(i))
    }

    /// Index of the last element ≤ x, or None when x < a_0.
    pub fn predecessor_index(&self, x: u64) -> Option<usize> {
        if self.n == 0 {
            return None;
        }
        let hx = x >> self.low_bits;
        let max_high = (self.upper.len() - self.n - 1) as u64;
        if hx > max_high {
            return Some(self.n - 1);
        }
        let lx = x & super::bits::mask(self.low_bits);
        // zero number hx terminates the run of elements whose high part is hx
        let end = self.upper.sel0(hx as usize);
        let mut pos = end;
        while pos > 0 && self.upper.get(pos - 1) {
            pos -= 1;
            let idx = pos - hx as usize;
            if self.lower.get(idx) <= lx {
                return Some(idx);
            }
        }
        // all of this run exceeds x; answer is the element just before it
        let first = pos - hx as usize;
        first.checked_sub(1)
    }

    /// (index, value) of max{a_i ≤ x}; Err(BeforeFirst) when x < a_0.
    pub fn predecessor(&self, x: u64) -> std::result::Result<(usize, u64), BeforeFirst> {
        self.predecessor_index(x).map(|i| (i, self.get(i))).ok_or(BeforeFirst)
    }

    /// First index j with a_j > x (n if none).
    pub fn successor_index(&self, x: u64) -> usize {
        self.predecessor_index(x).map_or(0, |i| i + 1)
    }

    /// First index j with a_j ≥ x (n if none).
    pub fn lower_bound(&self, x: u64) -> usize {
        if x == 0 {
            0
        } else {
            self.successor_index(x - 1)
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.iter_from(0)
    }

    /// Values a_i, a_{i+1}, …; one select, then sequential decoding.
    pub fn iter_from(&self, start: usize) -> impl Iterator<Item = u64> + '_ {
        let mut pos = if start < self.n { self.upper.sel1(start) } else { 0 };
        (start.min(self.n)..self.n).map(move |i| {
            while !self.upper.get(pos) {
                pos += 1;
            }
            let v = (((pos - i) as u64) << self.low_bits) | self.lower.get(i);
            pos += 1;
            v
        })
    }

    pub fn write(&self, w: &mut Writer) {
        w.put_u64(TAG);
        w.put_u64(self.n as u64);
        w.put_u64(self.low_bits as u64);
        w.put_words(self.lower.raw_words());
        self.upper.write(w);
    }

    pub fn read(r: &mut Reader) -> Result<Self> {
        r.expect("elias-fano tag", TAG)?;
        let n = r.get_usize()?;
        let low_bits = r.get_u64()? as u32;
        if low_bits > 63 {
            return Err(Error::Format(format!("elias-fano low width {low_bits}")));
        }
        let words = r.get_words((n * low_bits as usize).div_ceil(64))?;
        let lower = IntVec::from_raw(low_bits, n, words);
        let upper = BitVec::read(r)?;
        if upper.count_ones() != n || (n > 0 && (upper.get(upper.len() - 1) || !upper.get(upper.len() - 2))) {
            return Err(Error::Format("elias-fano upper bits inconsistent with length".into()));
        }
        Ok(Self { n, low_bits, lower, upper })
    }

    pub fn size_bits(&self) -> u64 {
        3 * 64 + 64 * self.lower.raw_words().len() as u64 + self.upper.size_bits()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BeforeFirst;
