use super::bits::{get_bit, select_in_word, BitBuf};
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

const SB_WORDS: usize = 8;
const SB_BITS: usize = SB_WORDS * 64;
const SAMPLE: usize = 8192;

/// Plain bit vector with rank and select directories. Only the raw bits are
/// serialized; directories are rebuilt on load.
#[derive(Clone, Debug, Default)]
pub struct BitVec {
    words: Vec<u64>,
    len: usize,
    // ones before each 512-bit superblock, plus the total at the end
    ranks: Vec<u64>,
    sel1: Vec<usize>,
    sel0: Vec<usize>,
}

impl PartialEq for BitVec {
    fn eq(&self, other: &Self) -> bool {
        self.len == other.len && self.words == other.words
    }
}

impl Eq for BitVec {}

impl From<BitBuf> for BitVec {
    fn from(buf: BitBuf) -> Self {
        let (words, len) = buf.into_parts();
        Self::from_words(words, len)
    }
}

impl BitVec {
    pub fn from_bools(bits: &[bool]) -> Self {
        let mut b = BitBuf::with_capacity(bits.len());
        for &x in bits {
            b.push_bit(x);
        }
        b.into()
    }

    pub fn from_words(mut words: Vec<u64>, len: usize) -> Self {
        words.resize(len.div_ceil(64), 0);
        if len % 64 != 0 {
            *words.last_mut().unwrap() &= (1u64 << (len % 64)) - 1;
        }
        let mut bv = Self { words, len, ..Default::default() };
        bv.build_index();
        bv
    }

    fn build_index(&mut self) {
        let nsb = self.words.len().div_ceil(SB_WORDS);
        let mut ranks = Vec::with_capacity(nsb + 1);
        let (mut sel1, mut sel0) = (Vec::new(), Vec::new());
        let (mut ones, mut zeros) = (0usize, 0usize);
        for (wi, &w) in self.words.iter().enumerate() {
            if wi % SB_WORDS == 0 {
                ranks.push(ones as u64);
            }
            let c = w.count_ones() as usize;
            let valid = (self.len - wi * 64).min(64);
            let z = valid - c;
            // record positions of every SAMPLE-th one / zero
            let next1 = sel1.len() * SAMPLE;
            if next1 < ones + c {
                sel1.push(wi * 64 + select_in_word(w, (next1 - ones) as u32) as usize);
            }
            let next0 = sel0.len() * SAMPLE;
            if next0 < zeros + z {
                sel0.push(wi * 64 + select_in_word(!w, (next0 - zeros) as u32) as usize);
            }
            ones += c;
            zeros += z;
        }
        ranks.push(ones as u64);
        self.ranks = ranks;
        self.sel1 = sel1;
        self.sel0 = sel0;
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn count_ones(&self) -> usize {
        *self.ranks.last().unwrap_or(&0) as usize
    }

    pub fn count_zeros(&self) -> usize {
        self.len - self.count_ones()
    }

    #[inline]
    pub fn get(&self, pos: usize) -> bool {
        debug_assert!(pos < self.len);
        get_bit(&self.words, pos)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Ones in [0, pos).
    #[inline]
    pub fn rank1(&self, pos: usize) -> usize {
        debug_assert!(pos <= self.len);
        let wi = pos / 64;
        let sb = wi / SB_WORDS;
        let mut r = self.ranks[sb] as usize;
        for w in &self.words[sb * SB_WORDS..wi] {
            r += w.count_ones() as usize;
        }
        if pos % 64 != 0 {
            r += (self.words[wi] & ((1u64 << (pos % 64)) - 1)).count_ones() as usize;
        }
        r
    }

    pub fn rank0(&self, pos: usize) -> usize {
        pos - self.rank1(pos)
    }

    pub fn select1(&self, rank: usize) -> Result<usize> {
        if rank >= self.count_ones() {
            return Err(Error::OutOfRange { index: rank, len: self.count_ones() });
        }
        Ok(self.sel1(rank))
    }

    pub fn select0(&self, rank: usize) -> Result<usize> {
        if rank >= self.count_zeros() {
            return Err(Error::OutOfRange { index: rank, len: self.count_zeros() });
        }
        Ok(self.sel0(rank))
    }

    /// Position of the `rank`-th one (0-based); caller guarantees range.
    #[inline]
    pub fn sel1(&self, rank: usize) -> usize {
        let s = rank / SAMPLE;
        let lo = self.sel1[s] / SB_BITS;
        let hi = match self.sel1.get(s + 1) {
            Some(&p) => p / SB_BITS,
            None => self.ranks.len() - 2,
        };
        // last superblock in [lo, hi] whose prefix count is ≤ rank
        let (mut a, mut b) = (lo, hi);
        while a < b {
            let mid = (a + b).div_ceil(2);
            if self.ranks[mid] as usize <= rank {
                a = mid;
            } else {
                b = mid - 1;
            }
        }
        let mut left = rank - self.ranks[a] as usize;
        let mut wi = a * SB_WORDS;
        loop {
            let c = self.words[wi].count_ones() as usize;
            if left < c {
                return wi * 64 + select_in_word(self.words[wi], left as u32) as usize;
            }
            left -= c;
            wi += 1;
        }
    }

    #[inline]
    fn zeros_before_sb(&self, sb: usize) -> usize {
        sb * SB_BITS - self.ranks[sb] as usize
    }

    /// Position of the `rank`-th zero (0-based); caller guarantees range.
    #[inline]
    pub fn sel0(&self, rank: usize) -> usize {
        let s = rank / SAMPLE;
        let lo = self.sel0[s] / SB_BITS;
        let hi = match self.sel0.get(s + 1) {
            Some(&p) => p / SB_BITS,
            None => self.ranks.len() - 2,
        };
        let (mut a, mut b) = (lo, hi);
        while a < b {
            let mid = (a + b).div_ceil(2);
            if self.zeros_before_sb(mid) <= rank {
                a = mid;
            } else {
                b = mid - 1;
            }
        }
        let mut left = rank - self.zeros_before_sb(a);
        let mut wi = a * SB_WORDS;
        loop {
            let w = !self.words[wi];
            let c = w.count_ones() as usize;
            if left < c {
                return wi * 64 + select_in_word(w, left as u32) as usize;
            }
            left -= c;
            wi += 1;
        }
    }

    /// Bits held by the rank/select directories (not serialized).
    pub fn directory_bits(&self) -> usize {
        (self.ranks.len() + self.sel1.len() + self.sel0.len()) * 64
    }

    pub fn write(&self, w: &mut Writer) {
        w.put_u64(self.len as u64);
        w.put_words(&self.words);
    }

    pub fn read(r: &mut Reader) -> Result<Self> {
        let len = r.get_usize()?;
        let words = r.get_words(len.div_ceil(64))?;
        if len % 64 != 0 && words.last().unwrap() >> (len % 64) != 0 {
            return Err(Error::Format("bits set past end of bit vector".into()));
        }
        Ok(Self::from_words(words, len))
    }

    /// Serialized size in bits.
    pub fn size_bits(&self) -> u64 {
        64 * (1 + self.words.len() as u64)
    }
}
