//! Seeded randomness for decode sessions.
//!
//! All stochastic steps (draft sampling, accept/reject coins, residual draws) go
//! through the [`Chooser`] trait. Production code drives it with a [`SessionRng`];
//! the [`crate::enumerate`] module drives the same code paths exhaustively to
//! recover exact output laws.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Real;

/// Source of the two kinds of random decisions made during decoding.
pub trait Chooser<T: Real> {
    /// Returns `true` with probability `p`; values outside `[0, 1]` are clamped.
    fn bernoulli(&mut self, p: T) -> bool;

    /// Draws index `i` with probability `probs[i]`. `probs` sums to one.
    fn categorical(&mut self, probs: &[T]) -> usize;
}

/// Per-session generator. Identical seeds and call sequences replay bit-exactly.
#[derive(Debug, Clone)]
pub struct SessionRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SessionRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

impl<T: Real> Chooser<T> for SessionRng {
    fn bernoulli(&mut self, p: T) -> bool {
        T::of(self.uniform()) < p
    }

    fn categorical(&mut self, probs: &[T]) -> usize {
        inverse_cdf(probs, T::of(self.uniform()))
    }
}

/// Inverse-CDF lookup over the stored order. Falls back to the last index with
/// positive mass when rounding leaves `u` above the final cumulative sum.
pub(crate) fn inverse_cdf<T: Real>(probs: &[T], u: T) -> usize {
    let mut cumulative = T::zero();
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > T::zero() {
            cumulative += p;
            last_positive = i;
            if u < cumulative {
                return i;
            }
        }
    }
    last_positive
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive deterministic hash of a sequence of words.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C909, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}
