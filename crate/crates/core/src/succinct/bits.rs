use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

#[inline]
pub fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Reads `width` (≤ 64) bits starting at bit `pos`, LSB-first.
#[inline]
pub fn read_bits(words: &[u64], pos: usize, width: u32) -> u64 {
    if width == 0 {
        return 0;
    }
    let w = pos / 64;
    let off = (pos % 64) as u32;
    let mut v = words[w] >> off;
    if off + width > 64 {
        v |= words[w + 1] << (64 - off);
    }
    v & mask(width)
}

#[inline]
pub fn get_bit(words: &[u64], pos: usize) -> bool {
    (words[pos / 64] >> (pos % 64)) & 1 == 1
}

/// Position of the `r`-th (0-based) set bit of `w`; requires r < popcount(w).
#[inline]
pub fn select_in_word(mut w: u64, mut r: u32) -> u32 {
    let mut base = 0;
    loop {
        let c = (w & 0xff).count_ones();
        if r < c {
            break;
        }
        r -= c;
        w >>= 8;
        base += 8;
    }
    for _ in 0..r {
        w &= w - 1;
    }
    base + w.trailing_zeros()
}

/// Append-only bit buffer.
#[derive(Clone, Debug, Default)]
pub struct BitBuf {
    words: Vec<u64>,
    len: usize,
}

impl BitBuf {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        Self { words: Vec::with_capacity(bits.div_ceil(64)), len: 0 }
    }

    pub fn zeroed(len: usize) -> Self {
        Self { words: vec![0; len.div_ceil(64)], len }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push_bits(&mut self, value: u64, width: u32) {
        if width == 0 {
            return;
        }
        debug_assert!(width == 64 || value >> width == 0);
        let off = (self.len % 64) as u32;
        if off == 0 {
            self.words.push(value);
        } else {
            *self.words.last_mut().unwrap() |= value << off;
            if off + width > 64 {
                self.words.push(value >> (64 - off));
            }
        }
        self.len += width as usize;
    }

    #[inline]
    pub fn push_bit(&mut self, bit: bool) {
        self.push_bits(bit as u64, 1);
    }

    pub fn push_zeros(&mut self, mut count: usize) {
        while count >= 64 {
            self.push_bits(0, 64);
            count -= 64;
        }
        self.push_bits(0, count as u32);
    }

    #[inline]
    pub fn set(&mut self, pos: usize) {
        self.words[pos / 64] |= 1 << (pos % 64);
    }

    pub fn get(&self, pos: usize) -> bool {
        get_bit(&self.words, pos)
    }

    pub fn read(&self, pos: usize, width: u32) -> u64 {
        read_bits(&self.words, pos, width)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn into_parts(self) -> (Vec<u64>, usize) {
        (self.words, self.len)
    }

    pub fn from_parts(words: Vec<u64>, len: usize) -> Self {
        debug_assert_eq!(words.len(), len.div_ceil(64));
        Self { words, len }
    }
}

/// Fixed-width packed integer array.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IntVec {
    width: u32,
    len: usize,
    words: Vec<u64>,
}

impl IntVec {
    pub fn from_slice(values: &[u64], width: u32) -> Self {
        assert!(width <= 64);
        let mut buf = BitBuf::with_capacity(values.len() * width as usize);
        for &v in values {
            assert!(width == 64 || v >> width == 0, "value {v} does not fit in {width} bits");
            buf.push_bits(v, width);
        }
        let (words, _) = buf.into_parts();
        Self { width, len: values.len(), words }
    }

    /// Smallest width holding every value (at least `min_width`).
    pub fn minimal(values: &[u64], min_width: u32) -> Self {
        let max = values.iter().copied().max().unwrap_or(0);
        Self::from_slice(values, bits_for(max).max(min_width))
    }

    #[inline]
    pub fn get(&self, i: usize) -> u64 {
        debug_assert!(i < self.len);
        read_bits(&self.words, i * self.width as usize, self.width)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn set(&mut self, i: usize, v: u64) {
        let pos = i * self.width as usize;
        let m = mask(self.width);
        let (w, off) = (pos / 64, pos % 64);
        self.words[w] = (self.words[w] & !(m << off)) | ((v & m) << off);
        if off as u32 + self.width > 64 {
            let hi = 64 - off;
            self.words[w + 1] = (self.words[w + 1] & !(m >> hi)) | ((v & m) >> hi);
        }
    }

    pub fn raw_words(&self) -> &[u64] {
        &self.words
    }

    pub fn from_raw(width: u32, len: usize, words: Vec<u64>) -> Self {
        assert_eq!(words.len(), (len * width as usize).div_ceil(64));
        Self { width, len, words }
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn write(&self, w: &mut Writer) {
        w.put_u64(((self.len as u64) << 8) | self.width as u64);
        w.put_words(&self.words);
    }

    pub fn read(r: &mut Reader) -> Result<Self> {
        let head = r.get_u64()?;
        let width = (head & 0xff) as u32;
        let len = (head >> 8) as usize;
        if width > 64 {
            return Err(Error::Format(format!("int vector width {width}")));
        }
        let words = r.get_words((len * width as usize).div_ceil(64))?;
        Ok(Self { width, len, words })
    }
}

/// Bits needed to write `v` in binary (0 for v = 0).
#[inline]
pub fn bits_for(v: u64) -> u32 {
    64 - v.leading_zeros()
}
