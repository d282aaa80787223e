//! Verification: exact speculative acceptance, additive (`delta`) and
//! multiplicative (`lambda`) relaxation, and chain and tree verification.
//!
//! Tree siblings are verified one after another against a working target `r`,
//! which starts as `q`. Sibling `j` (token `x`, proposed with probability
//! `p_j(x)`) is accepted with probability `min(1, t(x) / p_j(x))`, where `t` is
//! `r` with the relaxation applied. On rejection the working target becomes the
//! residual of `t` against the distribution `x` was proposed from: the drafter
//! distribution with the earlier siblings removed when siblings are sampled, or
//! the point mass at `x` when they were picked by rank. If every sibling is
//! rejected, the replacement token is drawn from the final working target.

use std::sync::Arc;

use crate::codebook::{aggregated_mass, refined_subset_additive, refined_subset_multiplicative, Codebook};
use crate::distributions::{residual, CategoricalDistribution, TokenId};
use crate::draft_tree::{DraftMode, DraftTree};
use crate::error::{invalid, Error, Result};
use crate::models::ModelOracle;
use crate::rng::Chooser;
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub enum AcceptanceRule<T> {
    Exact,
    /// Accepts on the mass of `A_{k,delta}`, neighbors whose mass sums below `delta`.
    Additive {
        codebook: Arc<Codebook<T>>,
        k: usize,
        delta: T,
    },
    /// Accepts on the mass of `A_{k,lambda}`, capped below `lambda * q[draft]`.
    Multiplicative {
        codebook: Arc<Codebook<T>>,
        k: usize,
        lambda: T,
    },
}

impl<T: Real> AcceptanceRule<T> {
    pub fn additive(codebook: Arc<Codebook<T>>, k: usize, delta: T) -> Result<Self> {
        check_k(&codebook, k)?;
        if !(delta > T::zero()) || !delta.is_finite() {
            return Err(invalid("delta", format!("must be > 0, got {delta}")));
        }
        Ok(Self::Additive { codebook, k, delta })
    }

    pub fn multiplicative(codebook: Arc<Codebook<T>>, k: usize, lambda: T) -> Result<Self> {
        check_k(&codebook, k)?;
        if !(lambda > T::one()) || !lambda.is_finite() {
            return Err(invalid("lambda", format!("must be > 1, got {lambda}")));
        }
        Ok(Self::Multiplicative { codebook, k, lambda })
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Self::Exact)
    }

    /// Fails unless the rule can be applied to distributions over `vocab` tokens.
    pub fn check_vocab(&self, vocab: usize) -> Result<()> {
        match self {
            Self::Exact => Ok(()),
            Self::Additive { codebook, .. } | Self::Multiplicative { codebook, .. } => {
                if codebook.vocab_size() == vocab {
                    Ok(())
                } else {
                    Err(Error::VocabMismatch {
                        expected: vocab,
                        found: codebook.vocab_size(),
                    })
                }
            }
        }
    }

    /// The refined subset `A` for `draft` under `q`; `{draft}` for the exact rule.
    pub fn subset(&self, draft: TokenId, q: &CategoricalDistribution<T>) -> Result<Vec<TokenId>> {
        if draft >= q.len() {
            return Err(Error::TokenOutOfRange {
                token: draft,
                vocab: q.len(),
            });
        }
        match self {
            Self::Exact => Ok(vec![draft]),
            Self::Additive { codebook, k, delta } => {
                self.check_vocab(q.len())?;
                let b = codebook.nearest_neighbors(draft, *k)?;
                Ok(refined_subset_additive(&b, q, *delta))
            }
            Self::Multiplicative { codebook, k, lambda } => {
                self.check_vocab(q.len())?;
                let b = codebook.nearest_neighbors(draft, *k)?;
                Ok(refined_subset_multiplicative(&b, q, *lambda))
            }
        }
    }
}

fn check_k<T: Real>(codebook: &Codebook<T>, k: usize) -> Result<()> {
    if k == 0 || k > codebook.vocab_size() {
        return Err(Error::KOutOfRange {
            k,
            vocab: codebook.vocab_size(),
        });
    }
    Ok(())
}

fn check_p_draft<T: Real>(draft: TokenId, p_draft: T) -> Result<()> {
    if !(p_draft > T::zero()) {
        return Err(Error::ZeroDraftProbability { token: draft });
    }
    if p_draft > T::one() + T::normalization_tolerance(1) {
        return Err(Error::InvalidProbability {
            index: draft,
            value: p_draft.as_f64(),
        });
    }
    Ok(())
}

/// `min(1, mass(A) / p_draft)`, with `A = {draft}` for the exact rule.
pub fn accept_probability<T: Real>(
    rule: &AcceptanceRule<T>,
    draft: TokenId,
    q: &CategoricalDistribution<T>,
    p_draft: T,
) -> Result<T> {
    check_p_draft(draft, p_draft)?;
    let mass = aggregated_mass(&rule.subset(draft, q)?, q);
    Ok((mass / p_draft).min(T::one()))
}

/// `q` with the mass of `A` moved onto `draft`.
pub fn adjusted_target<T: Real>(
    rule: &AcceptanceRule<T>,
    draft: TokenId,
    q: &CategoricalDistribution<T>,
) -> Result<CategoricalDistribution<T>> {
    let subset = rule.subset(draft, q)?;
    if subset.len() == 1 {
        return Ok(q.clone());
    }
    let mut weights = q.probs().to_vec();
    let mass = aggregated_mass(&subset, q);
    for &t in &subset {
        weights[t] = T::zero();
    }
    weights[draft] = mass;
    CategoricalDistribution::normalize(weights)
}

/// Pre-clamp ratio of relaxed to exact acceptance, `mass(A) / q[draft]`.
/// Always 1 for the exact rule; `+inf` for a relaxed rule when `q[draft] = 0`.
pub fn relaxation_ratio<T: Real>(
    rule: &AcceptanceRule<T>,
    draft: TokenId,
    q: &CategoricalDistribution<T>,
    p_draft: T,
) -> Result<T> {
    check_p_draft(draft, p_draft)?;
    if rule.is_exact() {
        return Ok(T::one());
    }
    let mass = aggregated_mass(&rule.subset(draft, q)?, q);
    let own = q.prob(draft);
    if own.is_zero() {
        return Ok(T::infinity());
    }
    Ok(mass / own)
}

/// One accept/reject decision during verification.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NodeDecision<T> {
    /// Tree node index, or draft position for chain verification.
    pub node: usize,
    pub token: TokenId,
    pub accept_prob: T,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationOutcome<T> {
    /// Accepted draft tokens along a root-connected path.
    pub accepted: Vec<TokenId>,
    /// Tree nodes (or chain positions) of the accepted tokens.
    pub accepted_nodes: Vec<usize>,
    /// The token sampled at the frontier: a bonus token after a fully accepted
    /// path, otherwise the replacement for the last rejection.
    pub bonus_token: TokenId,
    /// `true` when the path ended at a leaf with every draft accepted.
    pub fully_accepted: bool,
    pub target_forward_passes: usize,
    pub decisions: Vec<NodeDecision<T>>,
}

impl<T> VerificationOutcome<T> {
    /// Tokens committed this round: the accepted drafts followed by the bonus token.
    pub fn committed(&self) -> Vec<TokenId> {
        let mut out = self.accepted.clone();
        out.push(self.bonus_token);
        out
    }
}

/// Verifies a chain of sampled drafts. `drafts` holds each token with the
/// drafter probability it was sampled with.
///
/// After a rejection at position `i` the replacement comes from
/// `residual(q', p_i)`, where `q'` is the adjusted target and `p_i` the drafter
/// distribution at that position; if the residual is empty it comes from `q'`.
pub fn verify_chain<T, Q, P, C>(
    rule: &AcceptanceRule<T>,
    target: &Q,
    drafter: &P,
    prefix: &[TokenId],
    drafts: &[(TokenId, T)],
    rng: &mut C,
) -> Result<VerificationOutcome<T>>
where
    T: Real,
    Q: ModelOracle<T> + ?Sized,
    P: ModelOracle<T> + ?Sized,
    C: Chooser<T> + ?Sized,
{
    if drafts.is_empty() {
        return Err(invalid("drafts", "chain verification needs at least one draft"));
    }
    rule.check_vocab(target.vocab_size())?;
    let mut context = prefix.to_vec();
    let mut outcome = VerificationOutcome {
        accepted: Vec::new(),
        accepted_nodes: Vec::new(),
        bonus_token: 0,
        fully_accepted: false,
        target_forward_passes: 1,
        decisions: Vec::new(),
    };
    for (i, &(token, p_draft)) in drafts.iter().enumerate() {
        let q = target.next_distribution(&context);
        let adjusted = adjusted_target(rule, token, &q)?;
        check_p_draft(token, p_draft)?;
        let a = (adjusted.prob(token) / p_draft).min(T::one());
        let accepted = rng.bernoulli(a);
        outcome.decisions.push(NodeDecision {
            node: i,
            token,
            accept_prob: a,
            accepted,
        });
        if !accepted {
            let p = drafter.next_distribution(&context);
            let fallback = residual(&adjusted, &p).unwrap_or(adjusted);
            outcome.bonus_token = fallback.sample(rng);
            return Ok(outcome);
        }
        outcome.accepted.push(token);
        outcome.accepted_nodes.push(i);
        context.push(token);
    }
    outcome.bonus_token = target.next_distribution(&context).sample(rng);
    outcome.fully_accepted = true;
    Ok(outcome)
}

/// Verifies a drafted tree by descending from the root, trying siblings in
/// stored order. Every target query of the round counts as one forward pass.
pub fn verify_tree<T, Q, C>(
    rule: &AcceptanceRule<T>,
    target: &Q,
    tree: &DraftTree<T>,
    rng: &mut C,
) -> Result<VerificationOutcome<T>>
where
    T: Real,
    Q: ModelOracle<T> + ?Sized,
    C: Chooser<T> + ?Sized,
{
    rule.check_vocab(target.vocab_size())?;
    let mut outcome = VerificationOutcome {
        accepted: Vec::new(),
        accepted_nodes: Vec::new(),
        bonus_token: 0,
        fully_accepted: false,
        target_forward_passes: 1,
        decisions: Vec::new(),
    };
    let mut context = tree.prefix.clone();
    let mut node: Option<usize> = None;
    'descend: loop {
        let kids = tree.children_of(node);
        let q = target.next_distribution(&context);
        if kids.is_empty() {
            outcome.bonus_token = q.sample(rng);
            outcome.fully_accepted = node.is_some();
            return Ok(outcome);
        }
        let mut working = q;
        for (j, &kid) in kids.iter().enumerate() {
            let draft = &tree.nodes[kid];
            let t = adjusted_target(rule, draft.token, &working)?;
            check_p_draft(draft.token, draft.proposal_prob)?;
            let a = (t.prob(draft.token) / draft.proposal_prob).min(T::one());
            let accepted = rng.bernoulli(a);
            outcome.decisions.push(NodeDecision {
                node: kid,
                token: draft.token,
                accept_prob: a,
                accepted,
            });
            if accepted {
                outcome.accepted.push(draft.token);
                outcome.accepted_nodes.push(kid);
                context.push(draft.token);
                node = Some(kid);
                continue 'descend;
            }
            let effective = match tree.mode {
                DraftMode::Sampled => {
                    let earlier: Vec<TokenId> = kids[..j].iter().map(|&s| tree.nodes[s].token).collect();
                    tree.proposal_of(node)
                        .and_then(|p| p.without(&earlier))
                        .ok_or_else(|| invalid("tree", "sampled siblings without a stored proposal distribution"))?
                }
                DraftMode::TopRank => CategoricalDistribution::one_hot(t.len(), draft.token)?,
            };
            working = residual(&t, &effective).unwrap_or(t);
        }
        outcome.bonus_token = working.sample(rng);
        return Ok(outcome);
    }
}
