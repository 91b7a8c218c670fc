// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-replicate seed derivation for parallel Monte Carlo.
//!
//! Replicate `i` of a run with master seed `s` always draws from the same
//! stream, so results do not depend on how replicates are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type used throughout the crate.
pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replicate `index` under `master`.
pub fn replicate_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Independent sub-seed for a named purpose (e.g. interval drawing vs.
/// calibration samples) derived from one master seed.
pub fn domain_seed(master: u64, domain: &str) -> u64 {
    domain
        .bytes()
        .fold(splitmix64(master), |acc, b| splitmix64(acc ^ u64::from(b)))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn replicate_rng(master: u64, index: u64) -> Rng {
    rng_from_seed(replicate_seed(master, index))
}
