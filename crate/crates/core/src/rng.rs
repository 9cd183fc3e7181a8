//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from a base seed mixed with a path of stream identifiers, so
//! parallel tasks never share state and results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(base: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}

/// Stream tags used with [`derive_seed`].
pub mod tag {
    pub const DATA: u64 = 0xDA7A;
    pub const CV_PLAN: u64 = 0xC0F0;
    pub const CANDIDATE: u64 = 0xCA7D;
    pub const FULL_DNN: u64 = 0xF011;
    pub const BENCHMARK: u64 = 0xBE7C;
    pub const REFIT: u64 = 0x4EF1;
}
