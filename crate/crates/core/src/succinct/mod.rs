//! Bit vectors with rank/select, Elias-Fano and Golomb-Rice sequences.

pub mod bits;
pub mod bitvec;
pub mod elias_fano;
pub mod golomb_rice;

pub use bits::{BitBuf, IntVec};
pub use bitvec::BitVec;
pub use elias_fano::{BeforeFirst, EliasFanoSeq};
pub use golomb_rice::{GolombRiceSeq, Widths};
