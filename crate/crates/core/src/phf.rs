use crate::hashing::Key128;

/// Minimal k-perfect hash function: n keys onto ⌈n/k⌉ bins, every bin
/// holding exactly k keys except possibly the last.
pub trait MkPhf {
    /// Bin of a member key; an arbitrary valid bin for anything else.
    fn query(&self, key: Key128) -> u64;
    fn num_keys(&self) -> usize;
    fn k(&self) -> u32;

    fn num_bins(&self) -> u64 {
        (self.num_keys() as u64).div_ceil(self.k() as u64)
    }

    /// Exact serialized size.
    fn size_bits(&self) -> u64;

    fn bits_per_key(&self) -> f64 {
        self.size_bits() as f64 / self.num_keys().max(1) as f64
    }
}

/// Scheme identifiers written into every serialized header.
pub mod scheme {
    pub const THRESHOLD: u64 = u64::from_le_bytes(*b"KPHF\0THR");
    pub const BUCKET: u64 = u64::from_le_bytes(*b"KPHF\0BKT");
    pub const RECSPLIT: u64 = u64::from_le_bytes(*b"KPHF\0RSP");
    pub const PACHASH: u64 = u64::from_le_bytes(*b"KPHF\0PAC");
}

/// Capacity of bin `b` among ⌈n/k⌉ bins.
#[inline]
pub fn bin_capacity(n: usize, k: u32, b: u64) -> u32 {
    let m = (n as u64).div_ceil(k as u64);
    if b + 1 == m {
        (n as u64 - (m - 1) * k as u64) as u32
    } else {
        k
    }
}

pub(crate) fn check_keys(keys: &[Key128], k: u32) -> crate::Result<()> {
    if k == 0 {
        return Err(crate::Error::InvalidInput("k must be at least 1".into()));
    }
    if keys.is_empty() {
        return Err(crate::Error::InvalidInput("empty key set".into()));
    }
    Ok(())
}

/// Sorted copy check; the constructions would otherwise loop or fail obscurely.
pub(crate) fn check_distinct(keys: &[Key128]) -> crate::Result<()> {
    let mut sorted = keys.to_vec();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(crate::Error::InvalidInput(format!("duplicate key {:?}", w[0])));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacities() {
        assert_eq!(bin_capacity(11, 10, 0), 10);
        assert_eq!(bin_capacity(11, 10, 1), 1);
        assert_eq!(bin_capacity(20, 10, 1), 10);
    }
}
