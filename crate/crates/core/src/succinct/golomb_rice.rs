//! Golomb-Rice coding with the unary part written as h zeros followed by a
//! terminating one.

use super::bits::{mask, read_bits, BitBuf};
use super::bitvec::BitVec;
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

const TAG: u64 = u64::from_le_bytes(*b"GRSEQ\0\x01\0");
const OFFSET_SAMPLE: usize = 64;

#[inline]
pub fn push_unary(buf: &mut BitBuf, h: u64) {
    buf.push_zeros(h as usize);
    buf.push_bit(true);
}

/// Decodes a unary value starting at `pos`; returns (h, position after the terminator).
#[inline]
pub fn read_unary(words: &[u64], pos: usize) -> (u64, usize) {
    let mut wi = pos / 64;
    let mut w = words[wi] >> (pos % 64);
    let mut h = 0u64;
    if w == 0 {
        h = (64 - pos % 64) as u64;
        wi += 1;
        while words[wi] == 0 {
            h += 64;
            wi += 1;
        }
        w = words[wi];
    }
    h += w.trailing_zeros() as u64;
    (h, pos + h as usize + 1)
}

/// Cost in bits of x under Rice parameter l.
#[inline]
pub fn rice_cost(x: u64, l: u32) -> u64 {
    l as u64 + (x >> l) + 1
}

/// Fixed part then unary part, in one stream.
pub fn push_rice(buf: &mut BitBuf, x: u64, l: u32) {
    buf.push_bits(x & mask(l), l);
    push_unary(buf, x >> l);
}

pub fn read_rice(words: &[u64], pos: usize, l: u32) -> (u64, usize) {
    let low = read_bits(words, pos, l);
    let (h, next) = read_unary(words, pos + l as usize);
    ((h << l) | low, next)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Widths {
    Uniform(u32),
    /// Supplied by the owner on both build and load; not serialized.
    PerEntry(Vec<u8>),
}

impl Widths {
    #[inline]
    fn at(&self, j: usize) -> u32 {
        match self {
            Widths::Uniform(l) => *l,
            Widths::PerEntry(w) => w[j] as u32,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GolombRiceSeq {
    n: usize,
    widths: Widths,
    lower: Vec<u64>,
    lower_len: usize,
    unary: BitVec,
    // lower-bit offset of every OFFSET_SAMPLE-th entry (per-entry widths only)
    offsets: Vec<usize>,
}

impl PartialEq for GolombRiceSeq {
    fn eq(&self, o: &Self) -> bool {
        self.n == o.n && self.widths == o.widths && self.lower == o.lower && self.unary == o.unary
    }
}

impl GolombRiceSeq {
    pub fn new(values: &[u64], widths: Widths) -> Result<Self> {
        if let Widths::PerEntry(w) = &widths {
            if w.len() != values.len() {
                return Err(Error::InvalidInput(format!("{} widths for {} values", w.len(), values.len())));
            }
        }
        let mut lower = BitBuf::new();
        let mut unary = BitBuf::new();
        for (j, &x) in values.iter().enumerate() {
            let l = widths.at(j);
            if l > 63 {
                return Err(Error::InvalidInput(format!("rice width {l}")));
            }
            lower.push_bits(x & mask(l), l);
            push_unary(&mut unary, x >> l);
        }
        let (lower, lower_len) = lower.into_parts();
        let mut s = Self { n: values.len(), widths, lower, lower_len, unary: unary.into(), offsets: Vec::new() };
        s.build_offsets();
        Ok(s)
    }

    fn build_offsets(&mut self) {
        if let Widths::PerEntry(w) = &self.widths {
            let mut off = 0usize;
            self.offsets = Vec::with_capacity(self.n / OFFSET_SAMPLE + 1);
            for (j, &x) in w.iter().enumerate() {
                if j % OFFSET_SAMPLE == 0 {
                    self.offsets.push(off);
                }
                off += x as usize;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    fn lower_offset(&self, j: usize) -> usize {
        match &self.widths {
            Widths::Uniform(l) => j * *l as usize,
            Widths::PerEntry(w) => {
                let base = j / OFFSET_SAMPLE * OFFSET_SAMPLE;
                self.offsets[j / OFFSET_SAMPLE] + w[base..j].iter().map(|&x| x as usize).sum::<usize>()
            }
        }
    }

    #[inline]
    pub fn get(&self, j: usize) -> u64 {
        debug_assert!(j < self.n);
        let p = self.unary.sel1(j);
        // zeros directly before the j-th terminator
        let words = self.unary.words();
        let mut wi = p / 64;
        let mut w = words[wi] & mask((p % 64) as u32);
        let mut top = (wi * 64) as isize;
        while w == 0 && wi > 0 {
            wi -= 1;
            w = words[wi];
            top = (wi * 64) as isize;
        }
        let prev = if w == 0 { -1 } else { top + 63 - w.leading_zeros() as isize };
        let h = (p as isize - prev - 1) as u64;
        let l = self.widths.at(j);
        (h << l) | read_bits(&self.lower, self.lower_offset(j), l)
    }

    pub fn access(&self, j: usize) -> Result<u64> {
        if j >= self.n {
            return Err(Error::OutOfRange { index: j, len: self.n });
        }
        Ok(self.get(j))
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        let words = self.unary.words();
        let (mut pos, mut off) = (0usize, 0usize);
        (0..self.n).map(move |j| {
            let (h, next) = read_unary(words, pos);
            pos = next;
            let l = self.widths.at(j);
            let v = (h << l) | read_bits(&self.lower, off, l);
            off += l as usize;
            v
        })
    }

    /// Payload bits: Σ (L_j + ⌊x_j/2^L_j⌋ + 1).
    pub fn payload_bits(&self) -> usize {
        self.lower_len + self.unary.len()
    }

    pub fn write(&self, w: &mut Writer) {
        w.put_u64(TAG);
        w.put_u64(self.n as u64);
        if let Widths::Uniform(l) = self.widths {
            w.put_u64(l as u64);
        }
        w.put_u64(self.lower_len as u64);
        w.put_words(&self.lower);
        self.unary.write(w);
    }

    /// `widths` must be the per-entry widths used at build (ignored for uniform).
    pub fn read(r: &mut Reader, per_entry: Option<Vec<u8>>) -> Result<Self> {
        r.expect("golomb-rice tag", TAG)?;
        let n = r.get_usize()?;
        let widths = match per_entry {
            None => Widths::Uniform(r.get_u64()? as u32),
            Some(w) if w.len() == n => Widths::PerEntry(w),
            Some(w) => return Err(Error::Format(format!("{} widths for {} entries", w.len(), n))),
        };
        let lower_len = r.get_usize()?;
        let lower = r.get_words(lower_len.div_ceil(64))?;
        let unary = BitVec::read(r)?;
        if unary.count_ones() != n {
            return Err(Error::Format("golomb-rice unary part has wrong entry count".into()));
        }
        let mut s = Self { n, widths, lower, lower_len, unary, offsets: Vec::new() };
        s.build_offsets();
        Ok(s)
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

    #[test]
    fn five_with_two_low_bits() {
        let g = GolombRiceSeq::new(&[5], Widths::Uniform(2)).unwrap();
        assert_eq!(g.payload_bits(), 4);
        assert_eq!(g.get(0), 5);
        let mut b = BitBuf::new();
        push_rice(&mut b, 5, 2);
        // low bits 01, then unary "01"
        assert_eq!(b.len(), 4);
        assert_eq!(b.read(0, 2), 1);
        assert!(!b.get(2));
        assert!(b.get(3));
    }

    #[test]
    fn zero_with_zero_width() {
        let g = GolombRiceSeq::new(&[0], Widths::Uniform(0)).unwrap();
        assert_eq!(g.payload_bits(), 1);
        assert_eq!(g.get(0), 0);
    }

    #[test]
    fn per_entry_widths_and_long_unary() {
        let vals: Vec<u64> = (0..300u64).map(|i| if i == 77 { 1000 } else { i * 3 % 17 }).collect();
        let widths: Vec<u8> = (0..300).map(|i| (i % 4) as u8).collect();
        let g = GolombRiceSeq::new(&vals, Widths::PerEntry(widths.clone())).unwrap();
        let cost: u64 = vals.iter().zip(&widths).map(|(&x, &l)| rice_cost(x, l as u32)).sum();
        assert_eq!(g.payload_bits() as u64, cost);
        for (j, &x) in vals.iter().enumerate() {
            assert_eq!(g.get(j), x);
        }
        assert_eq!(g.iter().collect::<Vec<_>>(), vals);
        let mut w = Writer::new();
        g.write(&mut w);
        let bytes = w.into_bytes();
        assert_eq!(bytes.len() as u64 * 8, g.size_bits());
        let back = GolombRiceSeq::read(&mut Reader::new(&bytes), Some(widths)).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.get(77), 1000);
    }

    #[test]
    fn stream_helpers_roundtrip() {
        let mut b = BitBuf::new();
        let vals = [0u64, 1, 200, 7, 64, 65, 3];
        for (i, &v) in vals.iter().enumerate() {
            push_rice(&mut b, v, (i % 3) as u32);
        }
        b.push_bits(0, 64);
        let (words, _) = b.into_parts();
        let mut pos = 0;
        for (i, &v) in vals.iter().enumerate() {
            let (x, next) = read_rice(&words, pos, (i % 3) as u32);
            assert_eq!(x, v);
            assert_eq!(next - pos, rice_cost(v, (i % 3) as u32) as usize);
            pos = next;
        }
    }
}
