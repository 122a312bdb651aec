//! Per-replication random streams derived from a master seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for replication `index` of an experiment with seed `master`; a pure
/// function of both, so results never depend on scheduling.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    mix(mix(master).wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

pub fn replication_rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(replication_seed(master, index))
}

/// `n` variates uniform on `[0, 1)`.
pub fn uniform_variates<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}
