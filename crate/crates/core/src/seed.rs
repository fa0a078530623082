//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` keyed by a 64-bit seed
//! derived from a master seed, a stream tag and an index. Parallel and serial
//! runs therefore draw identical numbers for the same trial.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `stream`, item `index` under `master`.
pub fn derive(master: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(master ^ mix64(stream)).wrapping_add(index))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    rng(derive(master, stream, index))
}

/// Stream tags, kept distinct so no two purposes share numbers.
pub mod streams {
    pub const REFERENCE: u64 = 1;
    pub const TRIAL: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const PROCESS: u64 = 4;
    pub const BETA: u64 = 5;
    pub const BOUND_CHECK: u64 = 6;
}
