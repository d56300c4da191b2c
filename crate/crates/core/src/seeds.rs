//! Seed derivation for independent random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Stable seed for stream `(seed, tag, index)`.
pub fn derive(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ tag) ^ index)
}

pub fn rng(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tag, index))
}

pub const TAG_POLICY_INIT: u64 = 1;
pub const TAG_TRAIN_ENV: u64 = 2;
pub const TAG_TRAIN_ACT: u64 = 3;
pub const TAG_SHUFFLE: u64 = 4;
pub const TAG_EVAL_ENV: u64 = 5;
pub const TAG_EVAL_ACT: u64 = 6;
pub const TAG_ESTIMATOR: u64 = 7;
pub const TAG_RENDER: u64 = 8;
