//! Deterministic random sampling.
//!
//! All randomness comes from ChaCha8 seeded with `seed_from_u64`. Index
//! draws use `next_u64() % range` so the sequence depends only on the raw
//! generator output, not on a sampling algorithm of the `rand` crate.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform index in `0..n` for `n > 0`.
pub fn index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

/// `m` distinct indices from `0..n` (all of them when `m ≥ n`) by a
/// partial Fisher–Yates shuffle, in draw order.
pub fn sample_without_replacement(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let m = m.min(n);
    for i in 0..m {
        let j = i + index(rng, n - i);
        pool.swap(i, j);
    }
    pool.truncate(m);
    pool
}
