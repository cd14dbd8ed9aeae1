//! Master-seed fan-out.
//!
//! Every stochastic stage draws from `derive(master, stage, index)`, a
//! SplitMix64 hash of the master seed, a fixed stage tag and a counter
//! (scenario id, record number, restart number ...). Any stage can be re-run
//! in isolation and reproduce the same stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stage {
    Excitation = 1,
    MeasurementNoise = 2,
    Split = 3,
    NetworkInit = 4,
    Shuffle = 5,
    Sweep = 6,
}

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive(master: u64, stage: Stage, index: u64) -> u64 {
    let s = splitmix64(master ^ splitmix64(stage as u64));
    splitmix64(s ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Seed for a two-level counter, e.g. (scenario, record).
pub fn derive2(master: u64, stage: Stage, outer: u64, inner: u64) -> u64 {
    splitmix64(derive(master, stage, outer) ^ splitmix64(inner))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
