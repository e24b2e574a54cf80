//! Deterministic stream derivation.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! master seed and a short path of integers (grid point, trial, purpose...).
//! Two runs with the same master seed see the same streams no matter how the
//! work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream purposes used by the simulator.
pub mod purpose {
    pub const PLACEMENT: u64 = 0x706c_6163;
    pub const ACTIVATION: u64 = 0x6163_7469;
    pub const CHANNEL: u64 = 0x6368_616e;
    pub const AREA: u64 = 0x6172_6561;
    pub const SEARCH: u64 = 0x7365_6172;
    pub const CALIBRATION: u64 = 0x6361_6c69;
    pub const MIXTURE: u64 = 0x6d69_7874;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a master seed and a path into a child seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Generator for the stream identified by `path` under `master`.
pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
