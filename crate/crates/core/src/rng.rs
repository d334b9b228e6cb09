//! Seed derivation so that every randomized step is reproducible from one
//! base seed regardless of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::splitmix64;

/// Mix a base seed with a string key.
pub fn derive_seed(base: u64, key: &str) -> u64 {
    let mut h = splitmix64(base);
    for chunk in key.as_bytes().chunks(8) {
        let mut buf = [0u8; 8];
        buf[..chunk.len()].copy_from_slice(chunk);
        h = splitmix64(h ^ u64::from_le_bytes(buf));
    }
    splitmix64(h ^ key.len() as u64)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
