//! Autoregressive model oracles and the synthetic target/drafter families.
//!
//! A synthetic target maps the trailing `context_hash_depth` tokens of a prefix
//! through a seeded hash to a Dirichlet draw over the vocabulary, so the context
//! space is unbounded while every query stays pure and replayable. The drafter
//! adds seeded Gaussian noise to the target's log-probabilities; alignment is a
//! single knob.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::distributions::{CategoricalDistribution, TokenId};
use crate::error::{invalid, Result};
use crate::rng::{mix_seed, SessionRng};
use crate::scalar::Real;

/// Next-token distribution as a pure function of the prefix.
pub trait ModelOracle<T: Real>: Send + Sync {
    fn vocab_size(&self) -> usize;

    fn next_distribution(&self, prefix: &[TokenId]) -> CategoricalDistribution<T>;
}

impl<T: Real, M: ModelOracle<T> + ?Sized> ModelOracle<T> for &M {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_distribution(&self, prefix: &[TokenId]) -> CategoricalDistribution<T> {
        (**self).next_distribution(prefix)
    }
}

impl<T: Real, M: ModelOracle<T> + ?Sized> ModelOracle<T> for Box<M> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_distribution(&self, prefix: &[TokenId]) -> CategoricalDistribution<T> {
        (**self).next_distribution(prefix)
    }
}

/// Returns the same distribution for every prefix.
#[derive(Debug, Clone)]
pub struct ConstantOracle<T> {
    dist: CategoricalDistribution<T>,
}

impl<T: Real> ConstantOracle<T> {
    pub fn new(dist: CategoricalDistribution<T>) -> Self {
        Self { dist }
    }
}

impl<T: Real> ModelOracle<T> for ConstantOracle<T> {
    fn vocab_size(&self) -> usize {
        self.dist.len()
    }

    fn next_distribution(&self, _prefix: &[TokenId]) -> CategoricalDistribution<T> {
        self.dist.clone()
    }
}

/// Applies top-k truncation to another oracle's output.
#[derive(Debug, Clone)]
pub struct TopKTruncated<M> {
    inner: M,
    k: usize,
}

impl<M> TopKTruncated<M> {
    pub fn new(inner: M, k: usize) -> Self {
        Self { inner, k }
    }
}

impl<T: Real, M: ModelOracle<T>> ModelOracle<T> for TopKTruncated<M> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn next_distribution(&self, prefix: &[TokenId]) -> CategoricalDistribution<T> {
        let dist = self.inner.next_distribution(prefix);
        dist.truncate_top_k(self.k.clamp(1, dist.len()))
            .expect("truncating a valid distribution keeps positive mass")
    }
}

/// Knobs of a synthetic target/drafter pair.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticFamilyConfig {
    pub vocab_size: usize,
    /// Total Dirichlet concentration; each token gets `concentration / V`.
    /// Small values give sharp peaks, values comparable to `V` give flat,
    /// dispersed distributions.
    pub concentration: f64,
    /// Standard deviation of the drafter's log-space perturbation.
    pub drafter_noise: f64,
    /// Number of trailing tokens that determine the next-token distribution.
    pub context_hash_depth: usize,
    pub seed: u64,
}

impl SyntheticFamilyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(invalid("vocab_size", "must be >= 2"));
        }
        if !(self.concentration > 0.0) || !self.concentration.is_finite() {
            return Err(invalid("concentration", "must be a positive finite number"));
        }
        if !(self.drafter_noise >= 0.0) || !self.drafter_noise.is_finite() {
            return Err(invalid("drafter_noise", "must be a non-negative finite number"));
        }
        if !(1..=8).contains(&self.context_hash_depth) {
            return Err(invalid("context_hash_depth", "must be in 1..=8"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Target,
    Drafter,
}

const DRAFTER_SALT: u64 = 0xD4AF_7E55_0000_0001;

/// One side of a synthetic pair.
#[derive(Debug, Clone)]
pub struct SyntheticModel {
    cfg: SyntheticFamilyConfig,
    role: Role,
}

impl SyntheticModel {
    pub fn config(&self) -> &SyntheticFamilyConfig {
        &self.cfg
    }

    pub fn role(&self) -> Role {
        self.role
    }

    fn context_key(&self, prefix: &[TokenId]) -> u64 {
        let used = prefix.len().min(self.cfg.context_hash_depth);
        let mut words = Vec::with_capacity(used + 2);
        words.push(self.cfg.seed);
        words.push(used as u64);
        words.extend(prefix[prefix.len() - used..].iter().map(|&t| t as u64));
        mix_seed(&words)
    }

    /// Log-weights of the target's Dirichlet draw for this context. Small shapes
    /// use `Gamma(a) = Gamma(a + 1) * U^(1/a)` in log space so nothing underflows.
    fn target_logits(&self, key: u64) -> Vec<f64> {
        let vocab = self.cfg.vocab_size;
        let alpha = self.cfg.concentration / vocab as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        if alpha >= 1.0 {
            let gamma = Gamma::new(alpha, 1.0).expect("alpha is positive");
            (0..vocab).map(|_| gamma.sample(&mut rng).ln()).collect()
        } else {
            let gamma = Gamma::new(alpha + 1.0, 1.0).expect("alpha is positive");
            (0..vocab)
                .map(|_| {
                    let g: f64 = gamma.sample(&mut rng);
                    let u = 1.0 - rng.random::<f64>();
                    g.ln() + u.ln() / alpha
                })
                .collect()
        }
    }

    pub fn logits(&self, prefix: &[TokenId]) -> Vec<f64> {
        let key = self.context_key(prefix);
        let mut logits = self.target_logits(key);
        if self.role == Role::Drafter && self.cfg.drafter_noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[key, DRAFTER_SALT]));
            for l in &mut logits {
                let z: f64 = StandardNormal.sample(&mut rng);
                *l += self.cfg.drafter_noise * z;
            }
        }
        logits
    }
}

impl<T: Real> ModelOracle<T> for SyntheticModel {
    fn vocab_size(&self) -> usize {
        self.cfg.vocab_size
    }

    fn next_distribution(&self, prefix: &[TokenId]) -> CategoricalDistribution<T> {
        CategoricalDistribution::from_logits(&self.logits(prefix))
            .expect("synthetic logits are finite")
    }
}

/// Builds the `(target, drafter)` pair for a family.
pub fn make_synthetic_pair(cfg: SyntheticFamilyConfig) -> Result<(SyntheticModel, SyntheticModel)> {
    cfg.validate()?;
    Ok((
        SyntheticModel {
            cfg,
            role: Role::Target,
        },
        SyntheticModel {
            cfg,
            role: Role::Drafter,
        },
    ))
}

/// Mean and median of the largest next-token probability over random prefixes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbProfile {
    pub mean: f64,
    pub median: f64,
}

pub fn max_prob_profile<T: Real, M: ModelOracle<T> + ?Sized>(
    model: &M,
    samples: usize,
    prefix_len: usize,
    rng: &mut SessionRng,
) -> Result<ProbProfile> {
    if samples == 0 {
        return Err(invalid("samples", "must be >= 1"));
    }
    let vocab = model.vocab_size();
    let mut maxima: Vec<f64> = (0..samples)
        .map(|_| {
            let prefix: Vec<TokenId> = (0..prefix_len).map(|_| rng.below(vocab)).collect();
            model.next_distribution(&prefix).max_prob().as_f64()
        })
        .collect();
    maxima.sort_by(f64::total_cmp);
    let mean = maxima.iter().sum::<f64>() / samples as f64;
    let median = if samples % 2 == 1 {
        maxima[samples / 2]
    } else {
        0.5 * (maxima[samples / 2 - 1] + maxima[samples / 2])
    };
    Ok(ProbProfile { mean, median })
}

/// Mean total variation distance between two oracles over random prefixes.
pub fn mean_tvd<T: Real, A: ModelOracle<T> + ?Sized, B: ModelOracle<T> + ?Sized>(
    a: &A,
    b: &B,
    samples: usize,
    prefix_len: usize,
    rng: &mut SessionRng,
) -> Result<f64> {
    if samples == 0 {
        return Err(invalid("samples", "must be >= 1"));
    }
    let vocab = a.vocab_size();
    let mut total = 0.0;
    for _ in 0..samples {
        let prefix: Vec<TokenId> = (0..prefix_len).map(|_| rng.below(vocab)).collect();
        let da = a.next_distribution(&prefix);
        let db = b.next_distribution(&prefix);
        total += crate::distributions::tvd(&da, &db)?.as_f64();
    }
    Ok(total / samples as f64)
}
