//! Latent code vectors per token and the neighborhoods used by relaxed acceptance.
//!
//! `B_k(x)` is the exact k-nearest-neighbor set of a token under squared
//! Euclidean distance (center first, ties by ascending id). The refined subsets
//! scan `B_k(x)` nearest-first and stop at the first neighbor that would break
//! the mass bound, so they are always a prefix of the neighbor list.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distributions::{CategoricalDistribution, TokenId};
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// `V` latent vectors of common dimension `d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    dim: usize,
    codes: Vec<T>,
    cache: Option<NeighborTable>,
}

#[derive(Debug, Clone, PartialEq)]
struct NeighborTable {
    k: usize,
    lists: Vec<TokenId>,
}

/// `B_k(center)`: the center followed by its nearest tokens, nearest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSet {
    pub center: TokenId,
    pub members: Vec<TokenId>,
}

impl NeighborSet {
    pub fn k(&self) -> usize {
        self.members.len()
    }
}

impl<T: Real> Codebook<T> {
    pub fn new(codes: Vec<Vec<T>>) -> Result<Self> {
        let dim = codes.first().map(Vec::len).ok_or(Error::EmptyDistribution)?;
        if dim == 0 {
            return Err(invalid("dim", "codes must have dimension >= 1"));
        }
        if let Some(bad) = codes.iter().position(|c| c.len() != dim) {
            return Err(invalid(
                "codes",
                format!("code {bad} has dimension {}, expected {dim}", codes[bad].len()),
            ));
        }
        if codes.iter().flatten().any(|x| !x.is_finite()) {
            return Err(invalid("codes", "non-finite coordinate"));
        }
        Ok(Self {
            dim,
            codes: codes.into_iter().flatten().collect(),
            cache: None,
        })
    }

    /// Uniform random points in `[0, 1]^dim`.
    pub fn random(vocab: usize, dim: usize, seed: u64) -> Result<Self> {
        if vocab == 0 || dim == 0 {
            return Err(invalid("codebook", "vocab and dim must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let codes = (0..vocab * dim).map(|_| T::of(rng.random::<f64>())).collect();
        Ok(Self {
            dim,
            codes,
            cache: None,
        })
    }

    /// Parses the text format: a `V d` header line, then `V` lines of `d`
    /// whitespace-separated decimals. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::CodebookFormat {
            line: 1,
            reason: "missing `V d` header".into(),
        })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::CodebookFormat {
                line: hline,
                reason: format!("bad header: {e}"),
            })?;
        let [vocab, dim] = dims[..] else {
            return Err(Error::CodebookFormat {
                line: hline,
                reason: "header must be `V d`".into(),
            });
        };
        let mut codes = Vec::with_capacity(vocab);
        for (line, row) in lines {
            if codes.len() == vocab {
                return Err(Error::CodebookFormat {
                    line,
                    reason: format!("more than {vocab} code rows"),
                });
            }
            let code: Vec<T> = row
                .split_whitespace()
                .map(|s| s.parse::<f64>().map(T::of))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::CodebookFormat {
                    line,
                    reason: e.to_string(),
                })?;
            if code.len() != dim {
                return Err(Error::CodebookFormat {
                    line,
                    reason: format!("expected {dim} values, found {}", code.len()),
                });
            }
            codes.push(code);
        }
        if codes.len() != vocab {
            return Err(Error::CodebookFormat {
                line: text.lines().count(),
                reason: format!("expected {vocab} code rows, found {}", codes.len()),
            });
        }
        Self::new(codes)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.vocab_size(), self.dim);
        for code in self.codes.chunks(self.dim) {
            let row: Vec<String> = code.iter().map(|x| x.to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn vocab_size(&self) -> usize {
        self.codes.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn code(&self, token: TokenId) -> &[T] {
        &self.codes[token * self.dim..(token + 1) * self.dim]
    }

    pub fn distance(&self, a: TokenId, b: TokenId) -> T {
        self.code(a)
            .iter()
            .zip(self.code(b))
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum()
    }

    /// Precomputes `B_k` for every token so later queries with `k' <= k` are lookups.
    pub fn cache_neighbors(&mut self, k: usize) -> Result<()> {
        let vocab = self.vocab_size();
        if k == 0 || k > vocab {
            return Err(Error::KOutOfRange { k, vocab });
        }
        if self.cache.as_ref().is_some_and(|c| c.k >= k) {
            return Ok(());
        }
        let mut lists = Vec::with_capacity(vocab * k);
        for center in 0..vocab {
            lists.extend(self.scan_neighbors(center, k));
        }
        self.cache = Some(NeighborTable { k, lists });
        Ok(())
    }

    pub fn cached_k(&self) -> usize {
        self.cache.as_ref().map_or(0, |c| c.k)
    }

    /// `B_k(center)`: the center plus its `k - 1` nearest tokens.
    pub fn nearest_neighbors(&self, center: TokenId, k: usize) -> Result<NeighborSet> {
        let vocab = self.vocab_size();
        if k == 0 || k > vocab {
            return Err(Error::KOutOfRange { k, vocab });
        }
        if center >= vocab {
            return Err(Error::TokenOutOfRange { token: center, vocab });
        }
        let members = match &self.cache {
            Some(table) if table.k >= k => {
                table.lists[center * table.k..center * table.k + k].to_vec()
            }
            _ => self.scan_neighbors(center, k),
        };
        Ok(NeighborSet { center, members })
    }

    fn scan_neighbors(&self, center: TokenId, k: usize) -> Vec<TokenId> {
        let mut others: Vec<(T, TokenId)> = (0..self.vocab_size())
            .filter(|&t| t != center)
            .map(|t| (self.distance(center, t), t))
            .collect();
        let by_distance = |a: &(T, TokenId), b: &(T, TokenId)| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        };
        let take = k - 1;
        if take > 0 && take < others.len() {
            others.select_nth_unstable_by(take - 1, by_distance);
            others.truncate(take);
        }
        others.sort_unstable_by(by_distance);
        std::iter::once(center)
            .chain(others.into_iter().take(take).map(|(_, t)| t))
            .collect()
    }
}

/// `A_{k,delta}`: the center plus the longest nearest-first run of neighbors whose
/// combined mass stays strictly below `delta`. The center's own mass is not
/// counted, so the bound caps the mass moved onto the center.
pub fn refined_subset_additive<T: Real>(
    neighbors: &NeighborSet,
    q: &CategoricalDistribution<T>,
    delta: T,
) -> Vec<TokenId> {
    let mut subset = vec![neighbors.center];
    let mut moved = T::zero();
    for &m in neighbors.members.iter().filter(|&&m| m != neighbors.center) {
        let next = moved + q.prob(m);
        if next >= delta {
            break;
        }
        moved = next;
        subset.push(m);
    }
    subset
}

/// `A_{k,lambda}`: the center plus the longest nearest-first run of neighbors such
/// that the total mass including the center stays strictly below
/// `lambda * q[center]`.
pub fn refined_subset_multiplicative<T: Real>(
    neighbors: &NeighborSet,
    q: &CategoricalDistribution<T>,
    lambda: T,
) -> Vec<TokenId> {
    let center_mass = q.prob(neighbors.center);
    let cap = lambda * center_mass;
    let mut subset = vec![neighbors.center];
    let mut total = center_mass;
    for &m in neighbors.members.iter().filter(|&&m| m != neighbors.center) {
        let next = total + q.prob(m);
        if next >= cap {
            break;
        }
        total = next;
        subset.push(m);
    }
    subset
}

/// Total `q` mass of `subset`.
pub fn aggregated_mass<T: Real>(subset: &[TokenId], q: &CategoricalDistribution<T>) -> T {
    subset.iter().map(|&t| q.prob(t)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(v: &[f64]) -> CategoricalDistribution<f64> {
        CategoricalDistribution::new(v.to_vec()).unwrap()
    }

    fn line(xs: &[f64]) -> Codebook<f64> {
        Codebook::new(xs.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    #[test]
    fn nearest_neighbor_examples() {
        let cb = line(&[0.0, 1.0, 5.0]);
        assert_eq!(cb.nearest_neighbors(0, 2).unwrap().members, vec![0, 1]);
        assert_eq!(cb.nearest_neighbors(2, 1).unwrap().members, vec![2]);
        assert!(matches!(cb.nearest_neighbors(0, 4), Err(Error::KOutOfRange { .. })));

        // squared distances from the origin: 25, 1, 4
        let cb = Codebook::new(vec![vec![0.0, 0.0], vec![3.0, 4.0], vec![1.0, 0.0], vec![0.0, 2.0]])
            .unwrap();
        assert_eq!(cb.nearest_neighbors(0, 3).unwrap().members, vec![0, 2, 3]);
    }

    #[test]
    fn distance_ties_prefer_lower_ids() {
        let cb = line(&[0.0, 1.0, -1.0, 2.0]);
        assert_eq!(cb.nearest_neighbors(0, 3).unwrap().members, vec![0, 1, 2]);
    }

    #[test]
    fn additive_examples() {
        let neigh = NeighborSet { center: 0, members: vec![0, 1, 2] };
        let q = d(&[0.05, 0.01, 0.04, 0.9]);
        assert_eq!(refined_subset_additive(&neigh, &q, 0.02), vec![0, 1]);
        assert_eq!(refined_subset_additive(&neigh, &q, 0.005), vec![0]);
        let all = NeighborSet { center: 3, members: vec![3, 0, 1, 2] };
        assert_eq!(refined_subset_additive(&all, &q, 1.0), vec![3, 0, 1, 2]);
    }

    #[test]
    fn multiplicative_examples() {
        let neigh = NeighborSet { center: 0, members: vec![0, 1, 2] };
        let q = d(&[0.1, 0.05, 0.08, 0.77]);
        assert_eq!(refined_subset_multiplicative(&neigh, &q, 2.0), vec![0, 1]);
        assert_eq!(refined_subset_multiplicative(&neigh, &q, 1.0001), vec![0]);
        let zero_center = d(&[0.0, 0.3, 0.7]);
        let neigh = NeighborSet { center: 0, members: vec![0, 1, 2] };
        assert_eq!(refined_subset_multiplicative(&neigh, &zero_center, 50.0), vec![0]);
    }

    #[test]
    fn aggregated_mass_examples() {
        let q = d(&[0.2, 0.3, 0.5]);
        assert_eq!(aggregated_mass(&[1], &q), 0.3);
        assert!((aggregated_mass(&[0, 1, 2], &q) - 1.0).abs() < 1e-15);
        assert!((aggregated_mass(&[0, 2], &q) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn text_format_roundtrip_and_errors() {
        let cb = Codebook::<f64>::random(5, 3, 1).unwrap();
        assert_eq!(Codebook::parse(&cb.to_text()).unwrap(), cb);
        assert!(matches!(
            Codebook::<f64>::parse("2 2\n0 0\n1\n"),
            Err(Error::CodebookFormat { line: 3, .. })
        ));
        assert!(matches!(
            Codebook::<f64>::parse("3 1\n0\n1\n"),
            Err(Error::CodebookFormat { .. })
        ));
        assert!(matches!(
            Codebook::<f64>::parse("2 1\n0\nx\n"),
            Err(Error::CodebookFormat { line: 3, .. })
        ));
    }

    #[test]
    fn cache_matches_scan() {
        let mut cb = Codebook::<f64>::random(40, 4, 9).unwrap();
        let fresh: Vec<_> = (0..40).map(|c| cb.nearest_neighbors(c, 7).unwrap()).collect();
        cb.cache_neighbors(10).unwrap();
        assert_eq!(cb.cached_k(), 10);
        for (c, expected) in fresh.iter().enumerate() {
            assert_eq!(&cb.nearest_neighbors(c, 7).unwrap(), expected);
        }
    }

    fn brute_force_neighbors(codes: &[Vec<f64>], center: usize, k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = codes
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let dist: f64 = c.iter().zip(&codes[center]).map(|(a, b)| (a - b) * (a - b)).sum();
                (if i == center { -1.0 } else { dist }, i)
            })
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, usize, usize)> {
        (2usize..64, 1usize..4).prop_flat_map(|(v, dim)| {
            (
                prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), v),
                prop::collection::vec(0.001f64..1.0, v),
                0..v,
                1..=v,
            )
        })
    }

    proptest! {
        #[test]
        fn neighbors_agree_with_exhaustive_sort((codes, _, center, k) in arb_instance()) {
            let cb = Codebook::new(codes.clone()).unwrap();
            prop_assert_eq!(cb.nearest_neighbors(center, k).unwrap().members,
                            brute_force_neighbors(&codes, center, k));
        }

        #[test]
        fn refined_subsets_respect_bounds((codes, w, center, k) in arb_instance(),
                                          delta in 0.0001f64..0.5, lambda in 1.0001f64..8.0) {
            let cb = Codebook::new(codes).unwrap();
            let q = CategoricalDistribution::normalize(w).unwrap();
            let neigh = cb.nearest_neighbors(center, k).unwrap();

            let add = refined_subset_additive(&neigh, &q, delta);
            prop_assert_eq!(add[0], center);
            prop_assert!(add.iter().all(|t| neigh.members.contains(t)));
            prop_assert!(aggregated_mass(&add[1..], &q) < delta);

            let mul = refined_subset_multiplicative(&neigh, &q, lambda);
            prop_assert_eq!(mul[0], center);
            prop_assert!(mul.iter().all(|t| neigh.members.contains(t)));
            prop_assert!(aggregated_mass(&mul, &q) < lambda * q.prob(center));

            // monotone in the bound
            let add_wide = refined_subset_additive(&neigh, &q, delta * 1.5);
            prop_assert!(add.iter().all(|t| add_wide.contains(t)));
            let mul_wide = refined_subset_multiplicative(&neigh, &q, lambda * 1.5);
            prop_assert!(mul.iter().all(|t| mul_wide.contains(t)));
        }
    }
}
