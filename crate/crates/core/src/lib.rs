pub mod bucket;
pub mod bucket_opt;
pub mod codec;
pub mod error;
pub mod harness;
pub mod hashing;
pub mod pachash;
pub mod phf;
pub mod recsplit;
pub mod retrieval;
pub mod succinct;
pub mod threshold;
pub mod threshold_opt;

pub use error::{Error, Result};
pub use hashing::{hash_key, Key128};
