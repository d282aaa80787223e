//! Decode sessions (draft, verify, commit until the token budget is reached)
//! and multi-trial comparison grids.

use std::sync::Arc;

use rayon::prelude::*;

use crate::acceptance::{verify_chain, verify_tree, AcceptanceRule, NodeDecision, VerificationOutcome};
use crate::codebook::Codebook;
use crate::distributions::TokenId;
use crate::draft_tree::{draft_dynamic, draft_static, stats_from_links, DraftMode, DraftTree, StaticTreeSpec, TreeStats};
use crate::error::{invalid, Error, Result};
use crate::models::ModelOracle;
use crate::rng::{mix_seed, Chooser, SessionRng};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// Plain autoregressive sampling from the target, one token per step.
    Baseline,
    Chain { gamma: usize },
    StaticTree {
        name: String,
        spec: StaticTreeSpec,
        mode: DraftMode,
    },
    DynamicTree {
        top_k: usize,
        total_nodes: usize,
        depth_budget: usize,
    },
}

impl Method {
    pub fn static_preset(name: &str, mode: DraftMode) -> Result<Self> {
        Ok(Self::StaticTree {
            name: name.to_string(),
            spec: StaticTreeSpec::preset(name)?,
            mode,
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Chain { .. } => "chain",
            Self::StaticTree { .. } => "static",
            Self::DynamicTree { .. } => "dynamic",
        }
    }

    /// Short shape description used in result tables.
    pub fn shape_label(&self) -> String {
        match self {
            Self::Baseline => "-".into(),
            Self::Chain { gamma } => format!("chain-{gamma}"),
            Self::StaticTree { name, mode, .. } => match mode {
                DraftMode::Sampled => name.clone(),
                DraftMode::TopRank => format!("{name}/top-rank"),
            },
            Self::DynamicTree {
                top_k,
                total_nodes,
                depth_budget,
            } => format!("top{top_k}-n{total_nodes}-d{depth_budget}"),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Chain { gamma: 0 } => Err(invalid("gamma", "must be >= 1")),
            Self::StaticTree { spec, .. } if spec.node_count() < 2 => {
                Err(invalid("tree", "static tree needs at least one draft node"))
            }
            Self::DynamicTree {
                top_k,
                total_nodes,
                depth_budget,
            } if *top_k == 0 || *total_nodes == 0 || *depth_budget == 0 => Err(invalid(
                "dynamic",
                "top_k, total_nodes and depth_budget must all be >= 1",
            )),
            _ => Ok(()),
        }
    }
}

/// Acceptance rule parameters, independent of any particular codebook.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum RuleSpec {
    Exact,
    Additive { k: usize, delta: f64 },
    Multiplicative { k: usize, lambda: f64 },
}

impl RuleSpec {
    pub fn k(&self) -> Option<usize> {
        match self {
            Self::Exact => None,
            Self::Additive { k, .. } | Self::Multiplicative { k, .. } => Some(*k),
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            Self::Multiplicative { lambda, .. } => Some(*lambda),
            _ => None,
        }
    }

    pub fn delta(&self) -> Option<f64> {
        match self {
            Self::Additive { delta, .. } => Some(*delta),
            _ => None,
        }
    }

    pub fn build<T: Real>(&self, codebook: Option<&Arc<Codebook<T>>>) -> Result<AcceptanceRule<T>> {
        let need = || {
            codebook
                .cloned()
                .ok_or_else(|| Error::IncompatibleConfig("relaxed rules need a codebook".into()))
        };
        match *self {
            Self::Exact => Ok(AcceptanceRule::Exact),
            Self::Additive { k, delta } => AcceptanceRule::additive(need()?, k, T::of(delta)),
            Self::Multiplicative { k, lambda } => AcceptanceRule::multiplicative(need()?, k, T::of(lambda)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub token_budget: usize,
    pub method: Method,
    pub rule: RuleSpec,
    pub seed: u64,
}

impl SessionConfig {
    /// Checks the configuration on its own, before any oracle is queried.
    ///
    /// Relaxed rules are accepted for every drafting method except the
    /// baseline. For rank-selected drafts (top-rank static trees and dynamic
    /// trees) the drafter mass of a selected token is taken to be 1.
    pub fn validate(&self) -> Result<()> {
        if self.token_budget == 0 {
            return Err(invalid("token_budget", "must be >= 1"));
        }
        self.method.validate()?;
        if matches!(self.method, Method::Baseline) && self.rule != RuleSpec::Exact {
            return Err(Error::IncompatibleConfig(
                "the baseline drafts nothing, so only the exact rule applies".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DecodeMetrics {
    /// Committed tokens, including any overshoot past the budget in the last round.
    pub tokens_generated: usize,
    /// Verification rounds, one target forward pass each.
    pub decoding_steps: usize,
    pub drafter_passes: usize,
    /// `histogram[n]` counts rounds that accepted `n` draft tokens.
    pub accepted_length_histogram: Vec<usize>,
    /// Mean over rounds of the drafted tree's depth.
    pub mean_tree_depth: f64,
    pub step_compression: f64,
}

impl DecodeMetrics {
    /// Mean number of accepted draft tokens per round.
    pub fn mean_accept_len(&self) -> f64 {
        let rounds: usize = self.accepted_length_histogram.iter().sum();
        if rounds == 0 {
            return 0.0;
        }
        let total: usize = self
            .accepted_length_histogram
            .iter()
            .enumerate()
            .map(|(n, c)| n * c)
            .sum();
        total as f64 / rounds as f64
    }

    /// `steps * c_target + drafter_passes * c_draft`.
    pub fn latency_proxy(&self, c_target: f64, c_draft: f64) -> f64 {
        self.decoding_steps as f64 * c_target + self.drafter_passes as f64 * c_draft
    }
}

/// One drafted node as recorded in a trace.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TraceNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub token: TokenId,
    pub confidence: f64,
    pub global_accept: f64,
}

/// Per-round trace record, written as one JSON line.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub stats: TreeStats,
    pub nodes: Vec<TraceNode>,
    pub decisions: Vec<NodeDecision<f64>>,
    pub accepted_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionResult {
    /// Committed tokens truncated to the budget.
    pub tokens: Vec<TokenId>,
    pub metrics: DecodeMetrics,
    pub trace: Vec<RoundTrace>,
}

/// Runs one session with a [`SessionRng`] seeded from `cfg.seed`.
pub fn run_session<T, Q, P>(
    cfg: &SessionConfig,
    target: &Q,
    drafter: &P,
    codebook: Option<&Arc<Codebook<T>>>,
) -> Result<SessionResult>
where
    T: Real,
    Q: ModelOracle<T> + ?Sized,
    P: ModelOracle<T> + ?Sized,
{
    let rule = prepare(cfg, target, drafter, codebook)?;
    decode(cfg, &rule, target, drafter, &mut SessionRng::new(cfg.seed), true)
}

/// Like [`run_session`], but with an arbitrary source of random decisions and
/// optional trace collection.
pub fn run_session_with<T, Q, P, C>(
    cfg: &SessionConfig,
    target: &Q,
    drafter: &P,
    codebook: Option<&Arc<Codebook<T>>>,
    rng: &mut C,
    collect_trace: bool,
) -> Result<SessionResult>
where
    T: Real,
    Q: ModelOracle<T> + ?Sized,
    P: ModelOracle<T> + ?Sized,
    C: Chooser<T> + ?Sized,
{
    let rule = prepare(cfg, target, drafter, codebook)?;
    decode(cfg, &rule, target, drafter, rng, collect_trace)
}

fn prepare<T, Q, P>(
    cfg: &SessionConfig,
    target: &Q,
    drafter: &P,
    codebook: Option<&Arc<Codebook<T>>>,
) -> Result<AcceptanceRule<T>>
where
    T: Real,
    Q: ModelOracle<T> + ?Sized,
    P: ModelOracle<T> + ?Sized,
{
    cfg.validate()?;
    if target.vocab_size() != drafter.vocab_size() {
        return Err(Error::VocabMismatch {
            expected: target.vocab_size(),
            found: drafter.vocab_size(),
        });
    }
    if let Method::DynamicTree { top_k, .. } = cfg.method {
        if top_k > drafter.vocab_size() {
            return Err(Error::KOutOfRange {
                k: top_k,
                vocab: drafter.vocab_size(),
            });
        }
    }
    let rule = cfg.rule.build(codebook)?;
    rule.check_vocab(target.vocab_size())?;
    Ok(rule)
}

fn decode<T, Q, P, C>(
    cfg: &SessionConfig,
    rule: &AcceptanceRule<T>,
    target: &Q,
    drafter: &P,
    rng: &mut C,
    collect_trace: bool,
) -> Result<SessionResult>
where
    T: Real,
    Q: ModelOracle<T> + ?Sized,
    P: ModelOracle<T> + ?Sized,
    C: Chooser<T> + ?Sized,
{
    let mut tokens: Vec<TokenId> = Vec::with_capacity(cfg.token_budget + 64);
    let mut steps = 0;
    let mut drafter_passes = 0;
    let mut depth_sum = 0usize;
    let mut histogram: Vec<usize> = Vec::new();
    let mut trace = Vec::new();

    while tokens.len() < cfg.token_budget {
        let (outcome, tree) = match &cfg.method {
            Method::Baseline => {
                let x = target.next_distribution(&tokens).sample(rng);
                let outcome = VerificationOutcome {
                    accepted: Vec::new(),
                    accepted_nodes: Vec::new(),
                    bonus_token: x,
                    fully_accepted: false,
                    target_forward_passes: 1,
                    decisions: Vec::new(),
                };
                (outcome, None)
            }
            Method::Chain { gamma } => {
                let mut context = tokens.clone();
                let mut drafts = Vec::with_capacity(*gamma);
                for _ in 0..*gamma {
                    let p = drafter.next_distribution(&context);
                    let x = p.sample(rng);
                    drafts.push((x, p.prob(x)));
                    context.push(x);
                }
                drafter_passes += gamma;
                depth_sum += gamma;
                let outcome = verify_chain(rule, target, drafter, &tokens, &drafts, rng)?;
                let tree = collect_trace.then(|| chain_trace_nodes(&drafts));
                (outcome, tree.map(TraceShape::Chain))
            }
            Method::StaticTree { spec, mode, .. } => {
                let tree = draft_static(drafter, &tokens, spec, *mode, rng);
                (verify_drafted(&tree, rule, target, rng, &mut drafter_passes, &mut depth_sum)?, Some(TraceShape::Tree(tree)))
            }
            Method::DynamicTree {
                top_k,
                total_nodes,
                depth_budget,
            } => {
                let tree = draft_dynamic(drafter, &tokens, *top_k, *total_nodes, *depth_budget)?;
                (verify_drafted(&tree, rule, target, rng, &mut drafter_passes, &mut depth_sum)?, Some(TraceShape::Tree(tree)))
            }
        };
        steps += 1;
        let n = outcome.accepted.len();
        if histogram.len() <= n {
            histogram.resize(n + 1, 0);
        }
        histogram[n] += 1;
        if collect_trace {
            trace.push(round_trace(steps - 1, tree, &outcome));
        }
        tokens.extend(outcome.committed());
    }

    let generated = tokens.len();
    tokens.truncate(cfg.token_budget);
    let metrics = DecodeMetrics {
        tokens_generated: generated,
        decoding_steps: steps,
        drafter_passes,
        accepted_length_histogram: histogram,
        mean_tree_depth: depth_sum as f64 / steps as f64,
        step_compression: generated as f64 / steps as f64,
    };
    Ok(SessionResult { tokens, metrics, trace })
}

fn verify_drafted<T, Q, C>(
    tree: &DraftTree<T>,
    rule: &AcceptanceRule<T>,
    target: &Q,
    rng: &mut C,
    drafter_passes: &mut usize,
    depth_sum: &mut usize,
) -> Result<VerificationOutcome<T>>
where
    T: Real,
    Q: ModelOracle<T> + ?Sized,
    C: Chooser<T> + ?Sized,
{
    *drafter_passes += tree.drafter_forward_passes;
    *depth_sum += tree.depth();
    verify_tree(rule, target, tree, rng)
}

enum TraceShape<T> {
    Chain(Vec<TraceNode>),
    Tree(DraftTree<T>),
}

fn chain_trace_nodes<T: Real>(drafts: &[(TokenId, T)]) -> Vec<TraceNode> {
    let mut v = 1.0;
    drafts
        .iter()
        .enumerate()
        .map(|(i, &(token, p))| {
            v *= p.as_f64();
            TraceNode {
                id: i,
                parent: i.checked_sub(1),
                depth: i + 1,
                token,
                confidence: p.as_f64(),
                global_accept: v,
            }
        })
        .collect()
}

fn round_trace<T: Real>(round: usize, shape: Option<TraceShape<T>>, outcome: &VerificationOutcome<T>) -> RoundTrace {
    let nodes = match shape {
        None => Vec::new(),
        Some(TraceShape::Chain(nodes)) => nodes,
        Some(TraceShape::Tree(tree)) => tree
            .nodes
            .iter()
            .enumerate()
            .map(|(id, n)| TraceNode {
                id,
                parent: n.parent,
                depth: n.depth,
                token: n.token,
                confidence: n.confidence.as_f64(),
                global_accept: n.global_accept.as_f64(),
            })
            .collect(),
    };
    RoundTrace {
        round,
        stats: stats_of_trace_nodes(&nodes),
        nodes,
        decisions: outcome
            .decisions
            .iter()
            .map(|d| NodeDecision {
                node: d.node,
                token: d.token,
                accept_prob: d.accept_prob.as_f64(),
                accepted: d.accepted,
            })
            .collect(),
        accepted_len: outcome.accepted.len(),
    }
}

/// Tree statistics recomputed from trace nodes.
pub fn stats_of_trace_nodes(nodes: &[TraceNode]) -> TreeStats {
    stats_from_links(nodes.iter().map(|n| (n.parent, n.depth)))
}

/// One cell of a comparison grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub method: Method,
    pub rule: RuleSpec,
    pub token_budget: usize,
}

/// Aggregated statistics for one grid cell.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CellSummary {
    pub method: String,
    pub tree: String,
    pub k: Option<usize>,
    pub lambda: Option<f64>,
    pub delta: Option<f64>,
    pub trials: usize,
    pub mean_s: f64,
    pub stderr_s: f64,
    pub mean_accept_len: f64,
    pub mean_tree_depth: f64,
    pub drafter_passes_per_token: f64,
    pub mean_decoding_steps: f64,
    pub mean_drafter_passes: f64,
}

/// Seed of trial `trial` given the grid's base seed. Every cell reuses the same
/// trial seeds, so paired cells see the same random streams.
pub fn trial_seed(base_seed: u64, trial: usize) -> u64 {
    mix_seed(&[base_seed, trial as u64])
}

/// Runs `trials` sessions for every cell, in parallel on the current rayon
/// pool, and aggregates them in a fixed order.
pub fn compare_methods<T, Q, P>(
    grid: &[GridCell],
    target: &Q,
    drafter: &P,
    codebook: Option<&Arc<Codebook<T>>>,
    trials: usize,
    base_seed: u64,
) -> Result<Vec<CellSummary>>
where
    T: Real,
    Q: ModelOracle<T> + ?Sized,
    P: ModelOracle<T> + ?Sized,
{
    if grid.is_empty() {
        return Err(invalid("grid", "no cells to run"));
    }
    if trials == 0 {
        return Err(invalid("trials", "must be >= 1"));
    }
    let rules = grid
        .iter()
        .map(|cell| {
            let cfg = SessionConfig {
                token_budget: cell.token_budget,
                method: cell.method.clone(),
                rule: cell.rule,
                seed: 0,
            };
            prepare(&cfg, target, drafter, codebook).map(|rule| (cfg, rule))
        })
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|c| (0..trials).map(move |t| (c, t)))
        .collect();
    let metrics = jobs
        .par_iter()
        .map(|&(c, t)| {
            let (cfg, rule) = &rules[c];
            let mut rng = SessionRng::new(trial_seed(base_seed, t));
            decode(cfg, rule, target, drafter, &mut rng, false).map(|r| r.metrics)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(grid
        .iter()
        .zip(metrics.chunks(trials))
        .map(|(cell, runs)| summarize(cell, runs))
        .collect())
}

fn summarize(cell: &GridCell, runs: &[DecodeMetrics]) -> CellSummary {
    let n = runs.len() as f64;
    let mean = |f: &dyn Fn(&DecodeMetrics) -> f64| runs.iter().map(f).sum::<f64>() / n;
    let mean_s = mean(&|m| m.step_compression);
    let stderr_s = if runs.len() > 1 {
        let var = runs.iter().map(|m| (m.step_compression - mean_s).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    let tokens: usize = runs.iter().map(|m| m.tokens_generated).sum();
    let passes: usize = runs.iter().map(|m| m.drafter_passes).sum();
    CellSummary {
        method: cell.method.kind().to_string(),
        tree: cell.method.shape_label(),
        k: cell.rule.k(),
        lambda: cell.rule.lambda(),
        delta: cell.rule.delta(),
        trials: runs.len(),
        mean_s,
        stderr_s,
        mean_accept_len: mean(&|m| m.mean_accept_len()),
        mean_tree_depth: mean(&|m| m.mean_tree_depth),
        drafter_passes_per_token: passes as f64 / tokens as f64,
        mean_decoding_steps: mean(&|m| m.decoding_steps as f64),
        mean_drafter_passes: mean(&|m| m.drafter_passes as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::CategoricalDistribution;
    use crate::enumerate::exact_law;
    use crate::models::{make_synthetic_pair, ConstantOracle, SyntheticFamilyConfig};

    fn family(vocab: usize) -> SyntheticFamilyConfig {
        SyntheticFamilyConfig {
            vocab_size: vocab,
            concentration: 1.0,
            drafter_noise: 0.5,
            context_hash_depth: 2,
            seed: 3,
        }
    }

    fn cfg(method: Method, rule: RuleSpec, budget: usize, seed: u64) -> SessionConfig {
        SessionConfig {
            token_budget: budget,
            method,
            rule,
            seed,
        }
    }

    #[test]
    fn baseline_compresses_nothing() {
        let (target, drafter) = make_synthetic_pair(family(32)).unwrap();
        let r = run_session::<f64, _, _>(&cfg(Method::Baseline, RuleSpec::Exact, 100, 1), &target, &drafter, None).unwrap();
        assert_eq!(r.metrics.step_compression, 1.0);
        assert_eq!(r.metrics.decoding_steps, 100);
        assert_eq!(r.metrics.drafter_passes, 0);
        assert_eq!(r.tokens.len(), 100);
    }

    #[test]
    fn perfect_drafter_chain_commits_gamma_plus_one() {
        let (target, _) = make_synthetic_pair(family(32)).unwrap();
        for gamma in 1..=4 {
            let r = run_session::<f64, _, _>(
                &cfg(Method::Chain { gamma }, RuleSpec::Exact, 97, 5),
                &target,
                &target,
                None,
            )
            .unwrap();
            assert_eq!(r.metrics.step_compression, (gamma + 1) as f64);
            assert_eq!(r.metrics.drafter_passes, gamma * r.metrics.decoding_steps);
        }
    }

    #[test]
    fn sessions_replay_under_a_fixed_seed() {
        let (target, drafter) = make_synthetic_pair(family(64)).unwrap();
        let method = Method::static_preset("eagle1-26", DraftMode::Sampled).unwrap();
        let c = cfg(method, RuleSpec::Exact, 80, 11);
        let a = run_session::<f64, _, _>(&c, &target, &drafter, None).unwrap();
        let b = run_session::<f64, _, _>(&c, &target, &drafter, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trace.len(), a.metrics.decoding_steps);
    }

    #[test]
    fn accounting_identities_hold_for_every_method() {
        let (target, drafter) = make_synthetic_pair(family(64)).unwrap();
        let codebook = Arc::new(Codebook::<f64>::random(64, 4, 2).unwrap());
        let methods = [
            Method::Chain { gamma: 3 },
            Method::static_preset("eagle1-26", DraftMode::Sampled).unwrap(),
            Method::static_preset("extended-58", DraftMode::TopRank).unwrap(),
            Method::DynamicTree {
                top_k: 3,
                total_nodes: 20,
                depth_budget: 6,
            },
        ];
        for method in methods {
            for rule in [RuleSpec::Exact, RuleSpec::Multiplicative { k: 5, lambda: 3.0 }] {
                let r = run_session(&cfg(method.clone(), rule, 60, 2), &target, &drafter, Some(&codebook)).unwrap();
                let m = &r.metrics;
                assert_eq!(m.step_compression, m.tokens_generated as f64 / m.decoding_steps as f64);
                assert!(m.tokens_generated >= m.decoding_steps);
                assert!(m.tokens_generated >= 60);
                assert_eq!(m.accepted_length_histogram.iter().sum::<usize>(), m.decoding_steps);
                let committed: usize = r.trace.iter().map(|t| t.accepted_len + 1).sum();
                assert_eq!(committed, m.tokens_generated);
                if let Method::StaticTree { spec, .. } = &method {
                    assert_eq!(m.drafter_passes, spec.depth() * m.decoding_steps);
                }
            }
        }
    }

    #[test]
    fn incompatible_configs_fail_before_work() {
        let (target, drafter) = make_synthetic_pair(family(16)).unwrap();
        let relaxed = RuleSpec::Additive { k: 3, delta: 0.1 };
        let codebook = Arc::new(Codebook::<f64>::random(16, 2, 0).unwrap());
        let err = run_session(&cfg(Method::Baseline, relaxed, 10, 0), &target, &drafter, Some(&codebook));
        assert!(matches!(err, Err(Error::IncompatibleConfig(_))));
        let err = run_session::<f64, _, _>(&cfg(Method::Chain { gamma: 2 }, relaxed, 10, 0), &target, &drafter, None);
        assert!(matches!(err, Err(Error::IncompatibleConfig(_))));
        let small = Arc::new(Codebook::<f64>::random(8, 2, 0).unwrap());
        let err = run_session(&cfg(Method::Chain { gamma: 2 }, relaxed, 10, 0), &target, &drafter, Some(&small));
        assert!(matches!(err, Err(Error::VocabMismatch { .. })));
        let err = run_session::<f64, _, _>(&cfg(Method::Chain { gamma: 0 }, RuleSpec::Exact, 10, 0), &target, &drafter, None);
        assert!(err.is_err());
        let err = run_session::<f64, _, _>(&cfg(Method::Baseline, RuleSpec::Exact, 0, 0), &target, &drafter, None);
        assert!(err.is_err());
    }

    #[test]
    fn exact_chain_sessions_preserve_the_sequence_law() {
        // prefix-dependent target and drafter over 3 tokens
        let (target, drafter) = make_synthetic_pair(SyntheticFamilyConfig {
            vocab_size: 3,
            concentration: 3.0,
            drafter_noise: 1.0,
            context_hash_depth: 1,
            seed: 9,
        })
        .unwrap();
        let budget = 3;
        let c = cfg(Method::Chain { gamma: 1 }, RuleSpec::Exact, budget, 0);
        let law = exact_law::<f64, Vec<TokenId>, _>(|ch| {
            run_session_with(&c, &target, &drafter, None, ch, false).unwrap().tokens
        });
        let mut ancestral = std::collections::BTreeMap::new();
        for seq in 0..27usize {
            let toks = vec![seq / 9, (seq / 3) % 3, seq % 3];
            let mut p = 1.0;
            for i in 0..budget {
                let q: CategoricalDistribution<f64> = target.next_distribution(&toks[..i]);
                p *= q.prob(toks[i]);
            }
            ancestral.insert(toks, p);
        }
        for (seq, p) in &ancestral {
            let got = law.get(seq).copied().unwrap_or(0.0);
            assert!((got - p).abs() < 1e-12, "{seq:?}: {got} vs {p}");
        }
    }

    #[test]
    fn compare_methods_is_deterministic_and_ordered() {
        let (target, drafter) = make_synthetic_pair(family(32)).unwrap();
        let grid = vec![
            GridCell {
                method: Method::Baseline,
                rule: RuleSpec::Exact,
                token_budget: 40,
            },
            GridCell {
                method: Method::Chain { gamma: 2 },
                rule: RuleSpec::Exact,
                token_budget: 40,
            },
        ];
        let a = compare_methods::<f64, _, _>(&grid, &target, &drafter, None, 4, 8).unwrap();
        let b = compare_methods::<f64, _, _>(&grid, &target, &drafter, None, 4, 8).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].method, "baseline");
        assert_eq!(a[0].mean_s, 1.0);
        assert_eq!(a[0].stderr_s, 0.0);
        assert!(a[1].mean_s > 1.0);
        assert!(compare_methods::<f64, _, _>(&[], &target, &drafter, None, 4, 8).is_err());
    }

    #[test]
    fn constant_oracles_work_in_sessions() {
        let q = ConstantOracle::new(CategoricalDistribution::<f64>::new(vec![0.5, 0.5]).unwrap());
        let r = run_session(&cfg(Method::Chain { gamma: 2 }, RuleSpec::Exact, 10, 0), &q, &q, None).unwrap();
        assert_eq!(r.metrics.step_compression, 3.0);
    }
}
