//! Seeded, splittable random streams.
//!
//! Every sampler in the crate takes an explicit stream. Replication `r` of a
//! Monte Carlo run draws from `split_stream(master_seed, r)`, so results do
//! not depend on the order in which replications are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

/// A fresh stream for a single seed (stream index 0).
pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent sub-stream `index` of `master_seed`.
pub fn split_stream(master_seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}
