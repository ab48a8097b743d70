//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! whose seed is a pure function of a base seed and a path of indices, so no
//! global RNG state exists.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `base` with each element of `path` into a new 64-bit seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_for(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}

/// Stream tags keep unrelated consumers of the same seed apart.
pub mod stream {
    pub const SCENE: u64 = 1;
    pub const DEGRADE: u64 = 2;
    pub const BURST: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const CROP: u64 = 6;
    pub const META: u64 = 7;
    pub const RANSAC: u64 = 8;
    pub const PRETRAIN: u64 = 9;
    pub const SPLIT: u64 = 10;
}
