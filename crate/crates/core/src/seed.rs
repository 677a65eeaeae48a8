//! Seed derivation for per-entity random streams.
//!
//! Every random stream in the workspace is derived from a master seed, a
//! domain label and an index by hashing, so streams are independent of the
//! order entities are visited in and reproducible under parallel execution.

use sha2::{Digest, Sha256};

/// Derives a 32-byte RNG seed from `(master_seed, label, index)`.
pub fn derive_seed(master_seed: u64, label: &str, index: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update([label.len() as u8]);
    hasher.update(label.as_bytes());
    hasher.update(index.to_le_bytes());
    hasher.finalize().into()
}

/// First eight bytes of [`derive_seed`], for APIs that take a `u64`.
pub fn derive_seed_u64(master_seed: u64, label: &str, index: u64) -> u64 {
    let bytes = derive_seed(master_seed, label, index);
    u64::from_le_bytes(bytes[..8].try_into().unwrap())
}
