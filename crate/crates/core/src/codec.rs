//! Little-endian word serialization shared by every structure.

use crate::error::{Error, Result};

/// Byte sink. A counting writer only tallies the length, which is how
/// `size_bits` stays equal to the serialized size without allocating.
#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
    count_only: bool,
    len: usize,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn counting() -> Self {
        Self { buf: Vec::new(), count_only: true, len: 0 }
    }

    pub fn put_u64(&mut self, v: u64) {
        self.len += 8;
        if !self.count_only {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn put_f64(&mut self, v: f64) {
        self.put_u64(v.to_bits());
    }

    pub fn put_words(&mut self, words: &[u64]) {
        if self.count_only {
            self.len += words.len() * 8;
        } else {
            self.buf.reserve(words.len() * 8);
            for &w in words {
                self.put_u64(w);
            }
        }
    }

    /// Length-prefixed nested section.
    pub fn put_section(&mut self, f: impl FnOnce(&mut Writer)) {
        let mut inner = if self.count_only { Writer::counting() } else { Writer::new() };
        f(&mut inner);
        self.put_u64(inner.len as u64);
        self.len += inner.len;
        if !self.count_only {
            self.buf.extend_from_slice(&inner.buf);
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        assert!(!self.count_only, "counting writer has no bytes");
        self.buf
    }
}

#[derive(Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn get_u64(&mut self) -> Result<u64> {
        let end = self.pos + 8;
        let bytes =
            self.buf.get(self.pos..end).ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(u64::from_le_bytes(bytes.try_into().unwrap()))
    }

    pub fn get_f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.get_u64()?))
    }

    pub fn get_usize(&mut self) -> Result<usize> {
        let v = self.get_u64()?;
        usize::try_from(v).map_err(|_| Error::Format(format!("length {v} too large")))
    }

    pub fn get_words(&mut self, n: usize) -> Result<Vec<u64>> {
        if self.remaining() / 8 < n {
            return Err(Error::Format(format!("need {n} words, {} bytes left", self.remaining())));
        }
        (0..n).map(|_| self.get_u64()).collect()
    }

    pub fn section(&mut self) -> Result<Reader<'a>> {
        let len = self.get_usize()?;
        if self.remaining() < len {
            return Err(Error::Format(format!("section of {len} bytes truncated")));
        }
        let inner = Reader::new(&self.buf[self.pos..self.pos + len]);
        self.pos += len;
        Ok(inner)
    }

    pub fn expect(&mut self, what: &str, expected: u64) -> Result<()> {
        let got = self.get_u64()?;
        if got != expected {
            return Err(Error::Format(format!("{what}: expected {expected:#x}, found {got:#x}")));
        }
        Ok(())
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Format(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

/// Serialized form of a structure; `size_bits` is by definition the length
/// of what `write` emits.
pub trait Persist: Sized {
    fn write(&self, w: &mut Writer);
    fn read(r: &mut Reader) -> Result<Self>;

    fn size_bits(&self) -> u64 {
        let mut w = Writer::counting();
        self.write(&mut w);
        w.len() as u64 * 8
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(&mut w);
        w.into_bytes()
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let v = Self::read(&mut r)?;
        r.finish()?;
        Ok(v)
    }
}
