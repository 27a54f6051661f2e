//! Seed derivation.
//!
//! Every random stream in an experiment is derived from one 64-bit
//! experiment seed. A stream is identified by `(seed, purpose tag, index)`;
//! the derived seed is the first eight bytes (little endian) of
//! `SHA-256(seed_le || tag_len_le || tag || index_le)`. Streams with
//! different tags never share state, so e.g. changing the shadow count
//! leaves the target model's stream untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_le_bytes());
    let out = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&out[..8]);
    u64::from_le_bytes(b)
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(seed: u64, tag: &str, index: u64) -> Rng {
    rng_from(derive_seed(seed, tag, index))
}

/// Hex SHA-256 of arbitrary bytes, used for config digests.
pub fn digest_hex(bytes: &[u8]) -> String {
    let out = Sha256::digest(bytes);
    out.iter().map(|b| format!("{b:02x}")).collect()
}
