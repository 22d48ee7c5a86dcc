//! Seeded random streams. Every stochastic operation in the crate takes a
//! caller-owned generator so runs are reproducible from a single seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for a sub-task, derived from a parent seed and a label.
pub fn substream(seed: u64, label: u64) -> SimRng {
    // splitmix64 finaliser keeps nearby (seed, label) pairs uncorrelated
    let mut x = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    ChaCha8Rng::seed_from_u64(x)
}
