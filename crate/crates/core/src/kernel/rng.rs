//! Seeded random streams.
//!
//! Stream `(seed, index)` is a ChaCha8 keystream keyed by `seed` and using
//! `index` as the stream id, so any stream can be constructed directly
//! without generating the ones before it. Permutation `i` of every permutation
//! test consumes stream `i`, which makes results independent of how work is
//! split across threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GsaError, Result};

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    index: u64,
    inner: ChaCha8Rng,
}

pub fn rng_stream(seed: u64, index: u64) -> RngStream {
    let mut inner = ChaCha8Rng::seed_from_u64(seed);
    inner.set_stream(index);
    RngStream { seed, index, inner }
}

impl RngStream {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Shuffles `items` in place with the Fisher-Yates algorithm.
pub fn shuffle<T>(stream: &mut RngStream, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = stream.random_range(0..=i);
        items.swap(i, j);
    }
}

/// A uniformly random permutation of `0..n`.
pub fn permute(stream: &mut RngStream, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    shuffle(stream, &mut p);
    p
}

/// `k` distinct indices from `0..n`, uniformly at random, in draw order.
pub fn sample_without_replacement(stream: &mut RngStream, n: usize, k: usize) -> Result<Vec<usize>> {
    if k > n {
        return Err(GsaError::invalid(format!("cannot sample {k} items from {n}")));
    }
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = stream.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    Ok(pool)
}

/// `k` distinct indices drawn successively with probability proportional to
/// `weights` (Efraimidis-Spirakis keys). Weights must be positive.
pub fn weighted_sample_without_replacement(stream: &mut RngStream, weights: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > weights.len() {
        return Err(GsaError::invalid(format!("cannot sample {k} items from {}", weights.len())));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(GsaError::invalid(format!("sampling weight {w} is not positive")));
    }
    // key = ln(u) / w; the k largest keys form the sample
    let mut keys: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u: f64 = stream.random::<f64>();
            ((1.0 - u).ln() / w, i)
        })
        .collect();
    if k < keys.len() && k > 0 {
        keys.select_nth_unstable_by(k - 1, |a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    }
    keys.truncate(k);
    keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(keys.into_iter().map(|(_, i)| i).collect())
}
