//! Seed derivation for independent replications.
//!
//! Every run owns a `ChaCha8Rng` seeded from a single `u64`. Experiments derive
//! the per-run seed from the master seed, the problem size and the replication
//! index with a SplitMix64 mix, which is integer-only and therefore identical
//! on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 output step.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `replication` at problem size `n` under `master`.
pub fn replication_seed(master: u64, n: u64, replication: u64) -> u64 {
    let h = splitmix64(master);
    let h = splitmix64(h ^ n);
    splitmix64(h ^ replication.wrapping_mul(GOLDEN_GAMMA))
}

pub fn rng_from_seed(seed: u64) -> RunRng {
    ChaCha8Rng::seed_from_u64(seed)
}
