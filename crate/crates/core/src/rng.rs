//! Keyed random streams.
//!
//! Every random draw in the toolkit comes from a ChaCha8 stream whose seed is
//! derived from a user seed plus a key path (fold index, permutation index,
//! word text, ...). Streams never depend on scheduling, so parallel and serial
//! runs draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the UTF-8 bytes; stable across platforms and releases.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derive a 64-bit stream seed from a base seed and a key path.
pub fn derive_seed(seed: u64, key: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &k in key {
        h = splitmix64(h ^ splitmix64(k));
    }
    h
}

pub fn keyed_rng(seed: u64, key: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, key))
}

/// Domain tags so different consumers of the same seed never share a stream.
pub(crate) mod tag {
    pub const FOLDS: u64 = 1;
    pub const PERMUTATION: u64 = 2;
    pub const RANDOM_EMBEDDING: u64 = 3;
    pub const TRUTH_WEIGHTS: u64 = 4;
    pub const TRUTH_INTERCEPT: u64 = 5;
    pub const NOISE: u64 = 6;
    pub const PAIR_CAP: u64 = 7;
    pub const LEXICON: u64 = 8;
}
