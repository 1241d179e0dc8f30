//! Platform-stable pseudo-random streams for the mock and toy backends.

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use sha2::{Digest, Sha256};

/// 64-bit key of an input string (first 8 bytes of its SHA-256).
pub fn text_key(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
}

/// A splitmix64 stream derived from a seed and a sequence of keys.
pub fn stream(seed: u64, keys: &[u64]) -> SplitMix64 {
    let mut s = SplitMix64::seed_from_u64(seed);
    for &k in keys {
        s = SplitMix64::seed_from_u64(s.next_u64() ^ k);
    }
    s
}

/// Uniform draw in (0, 1] from the top 53 bits; never zero.
pub fn unit_open(rng: &mut SplitMix64) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in [-1, 1).
pub fn symmetric(rng: &mut SplitMix64) -> f64 {
    ((rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)) * 2.0 - 1.0
}
