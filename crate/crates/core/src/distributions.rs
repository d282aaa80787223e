//! Finite categorical distributions and the probability primitives built on them.

use std::cmp::Ordering;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::Chooser;
use crate::scalar::Real;

/// Index into the vocabulary.
pub type TokenId = usize;

/// Probability vector over a finite vocabulary. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDistribution<T> {
    probs: Arc<[T]>,
}

impl<T: Real> CategoricalDistribution<T> {
    /// Builds a distribution from weights that already sum to one up to a small
    /// tolerance; the weights are renormalized exactly. Badly scaled input is
    /// rejected rather than silently rescaled.
    pub fn new(weights: Vec<T>) -> Result<Self> {
        let sum = checked_sum(&weights)?;
        let tol = T::normalization_tolerance(weights.len());
        if (sum - T::one()).abs() > tol {
            return Err(Error::NotNormalized { sum: sum.as_f64() });
        }
        Ok(Self::scaled(weights, sum))
    }

    /// Normalizes arbitrary non-negative weights with positive total mass.
    pub fn normalize(weights: Vec<T>) -> Result<Self> {
        let sum = checked_sum(&weights)?;
        if sum <= T::zero() {
            return Err(Error::NotNormalized { sum: sum.as_f64() });
        }
        Ok(Self::scaled(weights, sum))
    }

    /// Softmax over log-weights.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NotNormalized { sum: max });
        }
        let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        Ok(Self {
            probs: exps.iter().map(|&e| T::of(e / sum)).collect(),
        })
    }

    pub fn uniform(vocab: usize) -> Result<Self> {
        if vocab == 0 {
            return Err(Error::EmptyDistribution);
        }
        Ok(Self::scaled(vec![T::one(); vocab], T::of(vocab as f64)))
    }

    pub fn one_hot(vocab: usize, token: TokenId) -> Result<Self> {
        if token >= vocab {
            return Err(Error::TokenOutOfRange { token, vocab });
        }
        let mut probs = vec![T::zero(); vocab];
        probs[token] = T::one();
        Ok(Self { probs: probs.into() })
    }

    fn scaled(mut weights: Vec<T>, sum: T) -> Self {
        if sum != T::one() {
            for w in &mut weights {
                *w /= sum;
            }
        }
        Self {
            probs: weights.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    /// Probability of `token`; zero for ids outside the vocabulary.
    pub fn prob(&self, token: TokenId) -> T {
        self.probs.get(token).copied().unwrap_or_else(T::zero)
    }

    pub fn max_prob(&self) -> T {
        self.probs.iter().copied().fold(T::zero(), T::max)
    }

    /// Most probable token, lowest id on ties.
    pub fn argmax(&self) -> TokenId {
        rank_order(&self.probs, 0, self.len())[0]
    }

    /// Draws a token by inverse CDF over the stored order.
    pub fn sample<C: Chooser<T> + ?Sized>(&self, rng: &mut C) -> TokenId {
        rng.categorical(&self.probs)
    }

    /// The `k` most probable tokens in descending probability, ties broken by
    /// ascending token id.
    pub fn top_k_indices(&self, k: usize) -> Result<Vec<TokenId>> {
        if k == 0 || k > self.len() {
            return Err(Error::KOutOfRange { k, vocab: self.len() });
        }
        Ok(rank_order(&self.probs, k, self.len()))
    }

    /// Keeps the `k` most probable tokens and renormalizes (top-k sampling).
    pub fn truncate_top_k(&self, k: usize) -> Result<Self> {
        let keep = self.top_k_indices(k)?;
        let mut weights = vec![T::zero(); self.len()];
        for t in keep {
            weights[t] = self.probs[t];
        }
        Self::normalize(weights)
    }

    /// The distribution conditioned on not drawing any of `removed`.
    /// `None` when the removed tokens carry all the mass.
    pub fn without(&self, removed: &[TokenId]) -> Option<Self> {
        if removed.is_empty() {
            return Some(self.clone());
        }
        let mut weights = self.probs.to_vec();
        for &t in removed {
            if let Some(w) = weights.get_mut(t) {
                *w = T::zero();
            }
        }
        Self::normalize(weights).ok()
    }
}

fn checked_sum<T: Real>(weights: &[T]) -> Result<T> {
    if weights.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let mut sum = T::zero();
    for (index, &w) in weights.iter().enumerate() {
        if !(w >= T::zero()) || !w.is_finite() {
            return Err(Error::InvalidProbability {
                index,
                value: w.to_f64().unwrap_or(f64::NAN),
            });
        }
        sum += w;
    }
    Ok(sum)
}

/// Indices sorted by descending probability then ascending id; only the first
/// `k` are materialized when `0 < k < len`.
fn rank_order<T: Real>(probs: &[T], k: usize, len: usize) -> Vec<TokenId> {
    let cmp = |a: &usize, b: &usize| -> Ordering {
        probs[*b]
            .partial_cmp(&probs[*a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(b))
    };
    let mut ids: Vec<TokenId> = (0..len).collect();
    if k > 0 && k < len {
        ids.select_nth_unstable_by(k - 1, cmp);
        ids.truncate(k);
    }
    ids.sort_unstable_by(cmp);
    ids
}

/// Total variation distance, `0.5 * sum |a_i - b_i|`.
pub fn tvd<T: Real>(a: &CategoricalDistribution<T>, b: &CategoricalDistribution<T>) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let l1: T = a
        .probs()
        .iter()
        .zip(b.probs())
        .map(|(&x, &y)| (x - y).abs())
        .sum();
    Ok((l1 * T::of(0.5)).min(T::one()))
}

/// Normalized positive part `[q - p]_+`, the replacement law after a rejection.
pub fn residual<T: Real>(
    q: &CategoricalDistribution<T>,
    p: &CategoricalDistribution<T>,
) -> Result<CategoricalDistribution<T>> {
    if q.len() != p.len() {
        return Err(Error::LengthMismatch(q.len(), p.len()));
    }
    let weights: Vec<T> = q
        .probs()
        .iter()
        .zip(p.probs())
        .map(|(&a, &b)| if a > b { a - b } else { T::zero() })
        .collect();
    if weights.iter().all(|w| w.is_zero()) {
        return Err(Error::ResidualUndefined);
    }
    CategoricalDistribution::normalize(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SessionRng;
    use proptest::prelude::*;

    fn d(v: &[f64]) -> CategoricalDistribution<f64> {
        CategoricalDistribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn construction_normalizes_near_one_and_rejects_the_rest() {
        let near = CategoricalDistribution::new(vec![0.5, 0.5 + 5e-7]).unwrap();
        assert!((near.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(
            CategoricalDistribution::new(vec![0.5, 0.6]),
            Err(Error::NotNormalized { .. })
        ));
        assert!(matches!(
            CategoricalDistribution::new(vec![1.5, -0.5]),
            Err(Error::InvalidProbability { index: 1, .. })
        ));
        assert!(matches!(
            CategoricalDistribution::<f64>::new(vec![]),
            Err(Error::EmptyDistribution)
        ));
    }

    #[test]
    fn sample_degenerate() {
        let dist = d(&[1.0, 0.0, 0.0]);
        for seed in 0..50 {
            assert_eq!(dist.sample(&mut SessionRng::new(seed)), 0);
        }
    }

    #[test]
    fn sample_fair_coin_frequency() {
        let dist = d(&[0.5, 0.5]);
        let mut rng = SessionRng::new(42);
        let n = 1_000_000;
        let zeros = (0..n).filter(|_| dist.sample(&mut rng) == 0).count();
        let freq = zeros as f64 / n as f64;
        assert!((0.497..=0.503).contains(&freq), "freq {freq}");
    }

    #[test]
    fn sample_replays() {
        let dist = d(&[0.2, 0.3, 0.5]);
        let draw = |seed| {
            let mut rng = SessionRng::new(seed);
            (0..200).map(|_| dist.sample(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn sample_passes_chi_square() {
        // chi-square critical values at significance 0.001
        for (probs, critical) in [
            (vec![0.1, 0.2, 0.3, 0.4], 16.266),
            (vec![0.05, 0.05, 0.1, 0.1, 0.15, 0.15, 0.2, 0.2], 24.322),
            ((1..=16).map(|i| i as f64 / 136.0).collect(), 37.697),
        ] {
            let dist = d(&probs);
            let mut rng = SessionRng::new(2024);
            let n = 1_000_000usize;
            let mut counts = vec![0usize; probs.len()];
            for _ in 0..n {
                counts[dist.sample(&mut rng)] += 1;
            }
            let stat: f64 = counts
                .iter()
                .zip(&probs)
                .map(|(&c, &p)| {
                    let e = p * n as f64;
                    (c as f64 - e).powi(2) / e
                })
                .sum();
            assert!(stat < critical, "chi2 {stat} >= {critical} for V={}", probs.len());
        }
    }

    #[test]
    fn tvd_examples() {
        let a = d(&[0.5, 0.3, 0.2]);
        assert_eq!(tvd(&a, &a).unwrap(), 0.0);
        assert_eq!(tvd(&d(&[1.0, 0.0]), &d(&[0.0, 1.0])).unwrap(), 1.0);
        assert!((tvd(&a, &d(&[0.2, 0.3, 0.5])).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(tvd(&a, &d(&[0.5, 0.5])), Err(Error::LengthMismatch(3, 2)));
    }

    #[test]
    fn residual_examples() {
        assert_eq!(residual(&d(&[0.6, 0.4]), &d(&[0.2, 0.8])).unwrap().probs(), &[1.0, 0.0]);
        assert_eq!(
            residual(&d(&[0.5, 0.3, 0.2]), &d(&[0.1, 0.5, 0.4])).unwrap().probs(),
            &[1.0, 0.0, 0.0]
        );
        // [q - p]_+ = [0.4, 0.2, 0] -> [2/3, 1/3, 0]
        let r = residual(&d(&[0.5, 0.4, 0.1]), &d(&[0.1, 0.2, 0.7])).unwrap();
        assert!((r.prob(0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.prob(1) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.prob(2), 0.0);
        let q = d(&[0.3, 0.7]);
        assert_eq!(residual(&q, &q), Err(Error::ResidualUndefined));
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(d(&[0.1, 0.7, 0.2]).top_k_indices(2).unwrap(), vec![1, 2]);
        assert_eq!(d(&[0.25; 4]).top_k_indices(2).unwrap(), vec![0, 1]);
        assert_eq!(d(&[0.05, 0.9, 0.05]).top_k_indices(1).unwrap(), vec![1]);
        assert!(d(&[0.5, 0.5]).top_k_indices(0).is_err());
        assert!(d(&[0.5, 0.5]).top_k_indices(3).is_err());
    }

    #[test]
    fn truncation_and_removal() {
        let t = d(&[0.1, 0.6, 0.3]).truncate_top_k(2).unwrap();
        assert!((t.prob(1) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(t.prob(0), 0.0);
        let w = d(&[0.5, 0.25, 0.25]).without(&[0]).unwrap();
        assert_eq!(w.probs(), &[0.0, 0.5, 0.5]);
        assert!(d(&[1.0, 0.0]).without(&[0]).is_none());
    }

    #[test]
    fn works_in_single_precision() {
        let a = CategoricalDistribution::<f32>::new(vec![0.5, 0.3, 0.2]).unwrap();
        let b = CategoricalDistribution::<f32>::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert!((tvd(&a, &b).unwrap() - 0.3).abs() < 1e-6);
        assert_eq!(a.top_k_indices(2).unwrap(), vec![0, 1]);
    }

    fn arb_dist(n: usize) -> impl Strategy<Value = CategoricalDistribution<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_filter_map("positive mass", |w| {
            CategoricalDistribution::normalize(w).ok()
        })
    }

    proptest! {
        #[test]
        fn tvd_is_a_metric((a, b, c) in (2usize..12).prop_flat_map(|n| (arb_dist(n), arb_dist(n), arb_dist(n)))) {
            prop_assert!(tvd(&a, &a).unwrap().abs() < 1e-12);
            prop_assert!((tvd(&a, &b).unwrap() - tvd(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!(tvd(&a, &c).unwrap() <= tvd(&a, &b).unwrap() + tvd(&b, &c).unwrap() + 1e-12);
        }

        #[test]
        fn residual_has_no_mass_where_q_le_p((q, p) in (2usize..12).prop_flat_map(|n| (arb_dist(n), arb_dist(n)))) {
            if let Ok(r) = residual(&q, &p) {
                prop_assert!((r.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
                for i in 0..q.len() {
                    if q.prob(i) <= p.prob(i) {
                        prop_assert_eq!(r.prob(i), 0.0);
                    }
                }
            }
        }
    }
}
