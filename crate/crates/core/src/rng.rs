//! Seeded random streams.
//!
//! Every consumer of randomness takes an explicit [`Rng`]. Streams are derived
//! from a run seed plus a stream id, so independent chains or runs never share
//! a sequence and results are reproducible bit for bit.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws a fresh seed from `rng`, for handing out child streams.
pub fn child_seed(rng: &mut Rng) -> u64 {
    rng.random()
}

/// Bernoulli draw with success probability `p`.
#[inline]
pub fn bernoulli(rng: &mut Rng, p: f64) -> u8 {
    (rng.random::<f64>() < p) as u8
}

/// Uniform float in `[0, 1)`.
#[inline]
pub fn uniform(rng: &mut Rng) -> f64 {
    rng.random()
}

/// Uniform index in `0..n`.
#[inline]
pub fn index(rng: &mut Rng, n: usize) -> usize {
    rng.random_range(0..n)
}

/// Fisher-Yates shuffle of `items` in place.
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}
