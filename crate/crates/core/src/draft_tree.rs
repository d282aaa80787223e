//! Draft trees: static shapes, static drafting, and confidence-trimmed dynamic drafting.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt::Write as _;

use crate::distributions::{CategoricalDistribution, TokenId};
use crate::error::{invalid, Error, Result};
use crate::models::ModelOracle;
use crate::rng::Chooser;
use crate::scalar::Real;

/// Fixed tree shape. Slot 0 is the root (the last committed position); every
/// other slot is a draft position with a parent and a child rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticTreeSpec {
    ids: Vec<String>,
    parents: Vec<Option<usize>>,
    ranks: Vec<usize>,
    depths: Vec<usize>,
    children: Vec<Vec<usize>>,
}

/// Root-excluded child-rank paths of the EAGLE-1 static tree (26 nodes with root).
const EAGLE1_PATHS: &[&[usize]] = &[
    &[0], &[1], &[2], &[3],
    &[0, 0], &[0, 1], &[0, 2], &[1, 0], &[1, 1], &[2, 0], &[2, 1], &[3, 0],
    &[0, 0, 0], &[0, 0, 1], &[0, 0, 2], &[0, 1, 0], &[0, 1, 1], &[0, 2, 0], &[0, 2, 1], &[1, 0, 0],
    &[0, 0, 0, 0], &[0, 0, 0, 1], &[0, 0, 0, 2],
    &[0, 0, 0, 0, 0], &[0, 0, 0, 0, 1],
];

/// The EAGLE-1 tree extended to 58 nodes: same top levels, extra branches
/// weighted toward the left spine, and depth 10.
const EXTENDED_EXTRA_PATHS: &[&[usize]] = &[
    &[0, 3], &[1, 2],
    &[0, 0, 3], &[0, 1, 2], &[1, 0, 1], &[2, 0, 0], &[3, 0, 0],
    &[0, 0, 0, 3], &[0, 0, 1, 0], &[0, 0, 1, 1], &[0, 1, 0, 0], &[0, 2, 0, 0], &[1, 0, 0, 0],
    &[0, 0, 0, 0, 2], &[0, 0, 0, 1, 0], &[0, 0, 0, 2, 0], &[0, 0, 1, 0, 0], &[0, 1, 0, 0, 0],
    &[1, 0, 0, 0, 0],
    &[0, 0, 0, 0, 0, 0], &[0, 0, 0, 0, 0, 1], &[0, 0, 0, 0, 0, 2], &[0, 0, 0, 0, 1, 0],
    &[0, 0, 0, 1, 0, 0],
    &[0, 0, 0, 0, 0, 0, 0], &[0, 0, 0, 0, 0, 0, 1], &[0, 0, 0, 0, 1, 0, 0],
    &[0, 0, 0, 0, 0, 0, 0, 0], &[0, 0, 0, 0, 0, 0, 0, 1],
    &[0, 0, 0, 0, 0, 0, 0, 0, 0], &[0, 0, 0, 0, 0, 0, 0, 0, 1],
    &[0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
];

pub const PRESET_NAMES: &[&str] = &["eagle1-26", "extended-58"];

impl StaticTreeSpec {
    /// Parses one node per line as `id parent rank`, with the root written
    /// `id - -`. Parents must appear before their children. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [id, parent, rank] = fields[..] else {
                return Err(Error::TreeSpec {
                    line: i + 1,
                    node: fields.first().unwrap_or(&"?").to_string(),
                    reason: "expected `id parent rank`".into(),
                });
            };
            rows.push((i + 1, id, parent, rank));
        }
        let declared: HashMap<&str, usize> = rows.iter().map(|r| (r.1, r.0)).collect();

        let mut spec = Self {
            ids: Vec::new(),
            parents: Vec::new(),
            ranks: Vec::new(),
            depths: Vec::new(),
            children: Vec::new(),
        };
        let mut slot_of: HashMap<&str, usize> = HashMap::new();
        for &(line, id, parent, rank) in &rows {
            let err = |reason: String| Error::TreeSpec {
                line,
                node: id.to_string(),
                reason,
            };
            if slot_of.contains_key(id) {
                return Err(err("duplicate node id".into()));
            }
            let slot = spec.ids.len();
            if parent == "-" {
                if slot != 0 {
                    return Err(err("second root; the root must be the only `- -` line and come first".into()));
                }
                if rank != "-" {
                    return Err(err("root rank must be `-`".into()));
                }
                spec.push(id, None, 0, 0);
            } else {
                if slot == 0 {
                    return Err(err("first line must be the root (`id - -`)".into()));
                }
                let rank: usize = rank
                    .parse()
                    .map_err(|_| err(format!("rank `{rank}` is not a non-negative integer")))?;
                let Some(&p) = slot_of.get(parent) else {
                    return Err(match declared.get(parent) {
                        Some(_) if parent == id => err("node is its own parent (cycle)".into()),
                        Some(&pline) => err(format!(
                            "parent `{parent}` is declared later (line {pline}); cycle or out-of-order node"
                        )),
                        None => err(format!("orphan: parent `{parent}` is never declared")),
                    });
                };
                spec.push(id, Some(p), rank, spec.depths[p] + 1);
            }
            slot_of.insert(id, slot);
        }
        if spec.ids.is_empty() {
            return Err(Error::TreeSpec {
                line: 0,
                node: "-".into(),
                reason: "empty tree spec".into(),
            });
        }
        for (slot, kids) in spec.children.iter_mut().enumerate() {
            let mut ranks: Vec<usize> = kids.iter().map(|&c| spec.ranks[c]).collect();
            ranks.sort_unstable();
            if let Some(missing) = ranks.iter().enumerate().find(|(i, r)| *i != **r).map(|(i, _)| i) {
                return Err(Error::TreeSpec {
                    line: rows[slot].0,
                    node: spec.ids[slot].clone(),
                    reason: format!("child ranks {ranks:?} are not contiguous from 0 (missing or duplicate rank {missing})"),
                });
            }
            kids.sort_by_key(|&c| spec.ranks[c]);
        }
        Ok(spec)
    }

    fn push(&mut self, id: &str, parent: Option<usize>, rank: usize, depth: usize) {
        let slot = self.ids.len();
        self.ids.push(id.to_string());
        self.parents.push(parent);
        self.ranks.push(rank);
        self.depths.push(depth);
        self.children.push(Vec::new());
        if let Some(p) = parent {
            self.children[p].push(slot);
        }
    }

    /// Builds a spec from root-excluded child-rank paths such as `[0, 1]`.
    pub fn from_paths(paths: &[&[usize]]) -> Result<Self> {
        let mut sorted: Vec<&[usize]> = paths.to_vec();
        sorted.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
        let mut index: HashMap<&[usize], usize> = HashMap::new();
        let mut text = String::from("0 - -\n");
        for (i, path) in sorted.iter().enumerate() {
            let Some((&rank, parent_path)) = path.split_last() else {
                return Err(invalid("paths", "empty path"));
            };
            let parent = if parent_path.is_empty() {
                0
            } else {
                *index
                    .get(parent_path)
                    .ok_or_else(|| invalid("paths", format!("path {path:?} has no parent path")))?
            };
            index.insert(path, i + 1);
            writeln!(text, "{} {} {}", i + 1, parent, rank).expect("writing to String");
        }
        Self::parse(&text)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "eagle1-26" => Self::from_paths(EAGLE1_PATHS),
            "extended-58" => {
                let paths: Vec<&[usize]> = EAGLE1_PATHS
                    .iter()
                    .chain(EXTENDED_EXTRA_PATHS)
                    .copied()
                    .collect();
                Self::from_paths(&paths)
            }
            _ => Err(Error::UnknownPreset {
                name: name.to_string(),
                available: PRESET_NAMES.join(", "),
            }),
        }
    }

    /// A single chain of `length` draft positions.
    pub fn chain(length: usize) -> Self {
        let paths: Vec<Vec<usize>> = (1..=length).map(|d| vec![0; d]).collect();
        let refs: Vec<&[usize]> = paths.iter().map(Vec::as_slice).collect();
        Self::from_paths(&refs).expect("chain paths are well formed")
    }

    /// Serializes in the format accepted by [`StaticTreeSpec::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for slot in 0..self.ids.len() {
            match self.parents[slot] {
                None => writeln!(out, "{} - -", self.ids[slot]),
                Some(p) => writeln!(out, "{} {} {}", self.ids[slot], self.ids[p], self.ranks[slot]),
            }
            .expect("writing to String");
        }
        out
    }

    /// Number of slots including the root.
    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn depth(&self) -> usize {
        self.depths.iter().copied().max().unwrap_or(0)
    }

    pub fn depth_of(&self, slot: usize) -> usize {
        self.depths[slot]
    }

    pub fn children_of(&self, slot: usize) -> &[usize] {
        &self.children[slot]
    }

    pub fn fan_outs(&self) -> Vec<usize> {
        self.children.iter().map(Vec::len).collect()
    }
}

/// How sibling tokens were proposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DraftMode {
    /// Siblings drawn from the drafter without replacement.
    Sampled,
    /// Siblings picked by drafter rank; verification treats the drafter mass
    /// of a selected token as 1.
    TopRank,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DraftNode<T> {
    pub token: TokenId,
    /// Probability of `token` in the drafter's full distribution at the parent.
    pub drafter_prob: T,
    /// Drafter confidence `c_j`; equal to `drafter_prob`.
    pub confidence: T,
    /// Product of confidences along the root path.
    pub global_accept: T,
    /// Probability with which this token was actually proposed: its mass in the
    /// drafter distribution with earlier siblings removed (sampled mode), or 1
    /// for rank-selected tokens.
    pub proposal_prob: T,
    pub parent: Option<usize>,
    pub depth: usize,
    pub rank: usize,
    pub children: Vec<usize>,
}

/// Draft tokens hanging off a committed prefix, in topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct DraftTree<T> {
    pub prefix: Vec<TokenId>,
    pub nodes: Vec<DraftNode<T>>,
    pub root_children: Vec<usize>,
    pub mode: DraftMode,
    pub drafter_forward_passes: usize,
    /// Drafter distribution each sampled sibling group was drawn from; index 0
    /// is the root, index `i + 1` is node `i`.
    proposals: Vec<Option<CategoricalDistribution<T>>>,
}

impl<T: Real> DraftTree<T> {
    fn empty(prefix: &[TokenId], mode: DraftMode) -> Self {
        Self {
            prefix: prefix.to_vec(),
            nodes: Vec::new(),
            root_children: Vec::new(),
            mode,
            drafter_forward_passes: 0,
            proposals: vec![None],
        }
    }

    fn add_node(&mut self, mut node: DraftNode<T>) -> usize {
        let idx = self.nodes.len();
        node.global_accept = match node.parent {
            Some(p) => self.nodes[p].global_accept * node.confidence,
            None => node.confidence,
        };
        match node.parent {
            Some(p) => self.nodes[p].children.push(idx),
            None => self.root_children.push(idx),
        }
        self.nodes.push(node);
        self.proposals.push(None);
        idx
    }

    pub fn children_of(&self, parent: Option<usize>) -> &[usize] {
        match parent {
            Some(p) => &self.nodes[p].children,
            None => &self.root_children,
        }
    }

    /// Drafter distribution that `parent`'s children were sampled from.
    pub fn proposal_of(&self, parent: Option<usize>) -> Option<&CategoricalDistribution<T>> {
        self.proposals[parent.map_or(0, |p| p + 1)].as_ref()
    }

    /// Tokens from the root down to and including `node`.
    pub fn path_tokens(&self, node: usize) -> Vec<TokenId> {
        let mut path = Vec::with_capacity(self.nodes[node].depth);
        let mut cursor = Some(node);
        while let Some(n) = cursor {
            path.push(self.nodes[n].token);
            cursor = self.nodes[n].parent;
        }
        path.reverse();
        path
    }

    /// Committed prefix followed by the path to `node`.
    pub fn node_prefix(&self, node: Option<usize>) -> Vec<TokenId> {
        let mut prefix = self.prefix.clone();
        if let Some(n) = node {
            prefix.extend(self.path_tokens(n));
        }
        prefix
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Drafts along a fixed shape: one drafter query per internal slot, one
/// forward pass per level.
///
/// Siblings that cannot be proposed because the drafter has no remaining mass
/// (fewer positive tokens than the fan-out) are dropped together with their
/// subtrees.
pub fn draft_static<T, M, C>(
    drafter: &M,
    prefix: &[TokenId],
    spec: &StaticTreeSpec,
    mode: DraftMode,
    rng: &mut C,
) -> DraftTree<T>
where
    T: Real,
    M: ModelOracle<T> + ?Sized,
    C: Chooser<T> + ?Sized,
{
    let mut tree = DraftTree::empty(prefix, mode);
    // spec slot -> tree node (None for the root or a dropped slot)
    let mut placed: Vec<Option<usize>> = vec![None; spec.node_count()];
    let mut alive = vec![false; spec.node_count()];
    alive[0] = true;
    for slot in 0..spec.node_count() {
        let kids = spec.children_of(slot);
        if kids.is_empty() || !alive[slot] {
            continue;
        }
        let parent = placed[slot];
        let dist = drafter.next_distribution(&tree.node_prefix(parent));
        match mode {
            DraftMode::TopRank => {
                let k = kids.len().min(dist.len());
                let tokens = dist.top_k_indices(k).expect("k within vocabulary");
                for (&kid, &token) in kids.iter().zip(&tokens) {
                    let p = dist.prob(token);
                    placed[kid] = Some(tree.add_node(DraftNode {
                        token,
                        drafter_prob: p,
                        confidence: p,
                        global_accept: T::zero(),
                        proposal_prob: T::one(),
                        parent,
                        depth: spec.depth_of(kid),
                        rank: spec.ranks[kid],
                        children: Vec::new(),
                    }));
                    alive[kid] = true;
                }
            }
            DraftMode::Sampled => {
                let mut drawn: Vec<TokenId> = Vec::with_capacity(kids.len());
                for &kid in kids {
                    let Some(remaining) = dist.without(&drawn) else {
                        break;
                    };
                    let token = remaining.sample(rng);
                    drawn.push(token);
                    let p = dist.prob(token);
                    placed[kid] = Some(tree.add_node(DraftNode {
                        token,
                        drafter_prob: p,
                        confidence: p,
                        global_accept: T::zero(),
                        proposal_prob: remaining.prob(token),
                        parent,
                        depth: spec.depth_of(kid),
                        rank: spec.ranks[kid],
                        children: Vec::new(),
                    }));
                    alive[kid] = true;
                }
                tree.proposals[parent.map_or(0, |p| p + 1)] = Some(dist);
            }
        }
    }
    tree.drafter_forward_passes = tree.depth();
    tree
}

struct Candidate<T> {
    value: T,
    depth: usize,
    ranks: Vec<usize>,
    parent: Option<usize>,
    token: TokenId,
    confidence: T,
}

impl<T: Real> Candidate<T> {
    /// Total order used for trimming: higher global accept first, then
    /// shallower, then lexicographically smaller rank path.
    fn priority(&self, other: &Self) -> Ordering {
        self.value
            .partial_cmp(&other.value)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.depth.cmp(&self.depth))
            .then_with(|| other.ranks.cmp(&self.ranks))
    }
}

impl<T: Real> PartialEq for Candidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.priority(other) == Ordering::Equal
    }
}

impl<T: Real> Eq for Candidate<T> {}

impl<T: Real> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority(other)
    }
}

/// Confidence-driven tree: every frontier node proposes its `top_k` most
/// confident continuations (with `V_child = V_parent * confidence`) up to
/// `depth_budget` levels, and the `total_nodes` nodes with the highest global
/// accept probability are kept.
///
/// The full expansion is never materialized. Since `V` cannot increase along a
/// path, the kept set is exactly what a best-first search pops, and a node only
/// needs a drafter query if its children could still make the cut. Ties are
/// broken by depth, then by rank path, so ancestors always precede descendants.
pub fn draft_dynamic<T, M>(
    drafter: &M,
    prefix: &[TokenId],
    top_k: usize,
    total_nodes: usize,
    depth_budget: usize,
) -> Result<DraftTree<T>>
where
    T: Real,
    M: ModelOracle<T> + ?Sized,
{
    if top_k == 0 || top_k > drafter.vocab_size() {
        return Err(Error::KOutOfRange {
            k: top_k,
            vocab: drafter.vocab_size(),
        });
    }
    if total_nodes == 0 {
        return Err(invalid("total_nodes", "must be >= 1"));
    }
    if depth_budget == 0 {
        return Err(invalid("depth_budget", "must be >= 1"));
    }
    let mut tree = DraftTree::empty(prefix, DraftMode::TopRank);
    let mut heap = BinaryHeap::new();
    let mut expanded_levels = vec![false; depth_budget];

    let mut expand = |heap: &mut BinaryHeap<Candidate<T>>, tree: &DraftTree<T>, parent: Option<usize>| {
        let (depth, value, ranks) = match parent {
            Some(p) => {
                let node = &tree.nodes[p];
                let mut ranks = rank_path(tree, p);
                ranks.push(0);
                (node.depth, node.global_accept, ranks)
            }
            None => (0, T::one(), vec![0]),
        };
        expanded_levels[depth] = true;
        let dist = drafter.next_distribution(&tree.node_prefix(parent));
        let tokens = dist.top_k_indices(top_k).expect("top_k checked against vocabulary");
        for (rank, token) in tokens.into_iter().enumerate() {
            let confidence = dist.prob(token);
            let mut path = ranks.clone();
            *path.last_mut().expect("non-empty") = rank;
            heap.push(Candidate {
                value: value * confidence,
                depth: depth + 1,
                ranks: path,
                parent,
                token,
                confidence,
            });
        }
    };

    expand(&mut heap, &tree, None);
    while tree.len() < total_nodes {
        let Some(c) = heap.pop() else { break };
        let idx = tree.add_node(DraftNode {
            token: c.token,
            drafter_prob: c.confidence,
            confidence: c.confidence,
            global_accept: T::zero(),
            proposal_prob: T::one(),
            parent: c.parent,
            depth: c.depth,
            rank: *c.ranks.last().expect("non-empty"),
            children: Vec::new(),
        });
        if c.depth < depth_budget {
            let remaining = total_nodes - tree.len();
            let strictly_better = heap.iter().filter(|e| e.value > c.value).count();
            if strictly_better < remaining {
                expand(&mut heap, &tree, Some(idx));
            }
        }
    }
    tree.drafter_forward_passes = expanded_levels.iter().filter(|&&e| e).count();
    Ok(tree)
}

fn rank_path<T: Real>(tree: &DraftTree<T>, node: usize) -> Vec<usize> {
    let mut ranks = Vec::new();
    let mut cursor = Some(node);
    while let Some(n) = cursor {
        ranks.push(tree.nodes[n].rank);
        cursor = tree.nodes[n].parent;
    }
    ranks.reverse();
    ranks
}

/// Shape summary of a drafted tree (root excluded from the node count).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TreeStats {
    pub node_count: usize,
    pub max_depth: usize,
    pub mean_leaf_depth: f64,
    /// Mean number of children over nodes that have any, root included.
    pub mean_fanout: f64,
}

pub fn tree_stats<T: Real>(tree: &DraftTree<T>) -> TreeStats {
    stats_from_links(tree.nodes.iter().map(|n| (n.parent, n.depth)))
}

/// [`TreeStats`] from `(parent, depth)` pairs listed in topological order.
pub fn stats_from_links(links: impl IntoIterator<Item = (Option<usize>, usize)>) -> TreeStats {
    let links: Vec<(Option<usize>, usize)> = links.into_iter().collect();
    let mut root_fanout = 0usize;
    let mut fanout = vec![0usize; links.len()];
    for &(parent, _) in &links {
        match parent {
            Some(p) => fanout[p] += 1,
            None => root_fanout += 1,
        }
    }
    let leaf_depths: Vec<usize> = links
        .iter()
        .zip(&fanout)
        .filter(|(_, &f)| f == 0)
        .map(|(&(_, d), _)| d)
        .collect();
    let internal: Vec<usize> = std::iter::once(root_fanout)
        .chain(fanout.iter().copied())
        .filter(|&f| f > 0)
        .collect();
    let mean = |xs: &[usize]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<usize>() as f64 / xs.len() as f64
        }
    };
    TreeStats {
        node_count: links.len(),
        max_depth: links.iter().map(|l| l.1).max().unwrap_or(0),
        mean_leaf_depth: mean(&leaf_depths),
        mean_fanout: mean(&internal),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerate::exact_law;
    use crate::models::ConstantOracle;
    use crate::rng::SessionRng;

    fn constant(probs: &[f64]) -> ConstantOracle<f64> {
        ConstantOracle::new(CategoricalDistribution::new(probs.to_vec()).unwrap())
    }

    fn one_hot(vocab: usize, token: usize) -> ConstantOracle<f64> {
        ConstantOracle::new(CategoricalDistribution::one_hot(vocab, token).unwrap())
    }

    #[test]
    fn parse_chain_spec() {
        let spec = StaticTreeSpec::parse("r - -\na r 0\nb a 0\n").unwrap();
        assert_eq!(spec.node_count(), 3);
        assert_eq!(spec.depth(), 2);
        assert_eq!(spec.fan_outs(), vec![1, 1, 0]);
    }

    #[test]
    fn parse_errors_name_the_node() {
        let cases = [
            ("0 - -\n1 0 0\n2 7 0\n", "2", "orphan"),
            ("0 - -\n1 2 0\n2 1 0\n", "1", "declared later"),
            ("0 - -\n1 1 0\n", "1", "cycle"),
            ("0 - -\n1 0 0\n2 0 2\n", "0", "contiguous"),
            ("0 - -\n1 0 1\n", "0", "contiguous"),
            ("0 - -\n1 0 0\n1 0 1\n", "1", "duplicate"),
            ("0 - -\n9 - -\n", "9", "second root"),
            ("1 0 0\n", "1", "root"),
        ];
        for (text, node, needle) in cases {
            match StaticTreeSpec::parse(text) {
                Err(Error::TreeSpec { node: n, reason, .. }) => {
                    assert_eq!(n, node, "{text:?}");
                    assert!(reason.contains(needle), "{reason} lacks {needle}");
                }
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn presets_have_stated_sizes_and_roundtrip() {
        let eagle = StaticTreeSpec::preset("eagle1-26").unwrap();
        let extended = StaticTreeSpec::preset("extended-58").unwrap();
        assert_eq!(eagle.node_count(), 26);
        assert_eq!(extended.node_count(), 58);
        assert_eq!(eagle.depth(), 5);
        assert_eq!(extended.depth(), 10);
        for spec in [eagle, extended] {
            assert_eq!(StaticTreeSpec::parse(&spec.to_text()).unwrap(), spec);
        }
        assert!(matches!(StaticTreeSpec::preset("nope"), Err(Error::UnknownPreset { .. })));
    }

    #[test]
    fn extended_keeps_eagle_top_levels_and_leans_left() {
        let eagle = StaticTreeSpec::preset("eagle1-26").unwrap();
        let extended = StaticTreeSpec::preset("extended-58").unwrap();
        assert_eq!(eagle.children_of(0).len(), extended.children_of(0).len());
        let subtree_size = |spec: &StaticTreeSpec, slot: usize| {
            let mut stack = vec![slot];
            let mut n = 0;
            while let Some(s) = stack.pop() {
                n += 1;
                stack.extend(spec.children_of(s));
            }
            n
        };
        let sizes: Vec<usize> = extended.children_of(0).iter().map(|&c| subtree_size(&extended, c)).collect();
        assert!(sizes.windows(2).all(|w| w[0] >= w[1]), "{sizes:?}");
    }

    #[test]
    fn sampled_chain_drafting() {
        let drafter = constant(&[0.5, 0.25, 0.25]);
        let spec = StaticTreeSpec::chain(4);
        let tree = draft_static(&drafter, &[1], &spec, DraftMode::Sampled, &mut SessionRng::new(3));
        assert_eq!(tree.len(), 4);
        assert_eq!(tree.drafter_forward_passes, 4);
        assert_eq!(tree_stats(&tree).mean_fanout, 1.0);
        for node in &tree.nodes {
            assert_eq!(node.proposal_prob, node.drafter_prob);
        }
    }

    #[test]
    fn one_hot_drafter_fills_rank_zero_with_argmax() {
        let drafter = one_hot(5, 2);
        let spec = StaticTreeSpec::preset("eagle1-26").unwrap();
        for mode in [DraftMode::Sampled, DraftMode::TopRank] {
            let tree = draft_static(&drafter, &[0], &spec, mode, &mut SessionRng::new(1));
            for node in tree.nodes.iter().filter(|n| n.rank == 0) {
                assert_eq!(node.token, 2);
                assert_eq!(node.drafter_prob, 1.0);
            }
        }
        // sampled siblings need positive remaining mass
        let sampled = draft_static(&drafter, &[0], &spec, DraftMode::Sampled, &mut SessionRng::new(1));
        assert_eq!(sampled.len(), 5);
    }

    #[test]
    fn top_rank_reads_sorted_probabilities() {
        let drafter = constant(&[0.4, 0.3, 0.2, 0.1]);
        let spec = StaticTreeSpec::parse("0 - -\n1 0 0\n2 0 1\n").unwrap();
        let tree = draft_static(&drafter, &[], &spec, DraftMode::TopRank, &mut SessionRng::new(0));
        let tokens: Vec<_> = tree.nodes.iter().map(|n| n.token).collect();
        let conf: Vec<_> = tree.nodes.iter().map(|n| n.confidence).collect();
        assert_eq!(tokens, vec![0, 1]);
        assert!((conf[0] - 0.4).abs() < 1e-15 && (conf[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn sampled_siblings_are_distinct_and_first_child_follows_drafter() {
        let probs = [0.4, 0.3, 0.2, 0.1];
        let drafter = constant(&probs);
        let spec = StaticTreeSpec::parse("0 - -\n1 0 0\n2 0 1\n3 0 2\n").unwrap();
        let law = exact_law::<f64, Vec<usize>, _>(|c| {
            let tree = draft_static(&drafter, &[], &spec, DraftMode::Sampled, c);
            tree.nodes.iter().map(|n| n.token).collect()
        });
        let mut first = [0.0; 4];
        for (tokens, w) in &law {
            let mut sorted = tokens.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), 3);
            first[tokens[0]] += w;
        }
        for (f, p) in first.iter().zip(probs) {
            assert!((f - p).abs() < 1e-12);
        }
    }

    #[test]
    fn static_drafting_uses_one_pass_per_level() {
        let drafter = constant(&[0.1; 10]);
        for name in PRESET_NAMES {
            let spec = StaticTreeSpec::preset(name).unwrap();
            let tree = draft_static(&drafter, &[4], &spec, DraftMode::Sampled, &mut SessionRng::new(2));
            assert_eq!(tree.drafter_forward_passes, spec.depth());
            assert_eq!(tree_stats(&tree).node_count + 1, spec.node_count());
        }
    }

    #[test]
    fn global_accept_is_path_product() {
        let drafter = constant(&[0.5, 0.4, 0.1]);
        let tree = draft_dynamic::<f64, _>(&drafter, &[], 2, 6, 3).unwrap();
        for (i, node) in tree.nodes.iter().enumerate() {
            let mut product = 1.0;
            let mut cursor = Some(i);
            while let Some(n) = cursor {
                product *= tree.nodes[n].confidence;
                cursor = tree.nodes[n].parent;
            }
            assert!((node.global_accept - product).abs() < 1e-12);
        }
        // the chain 0 -> 0 has V = 0.5 * 0.5; a [0.5, 0.4] path gives 0.2
        let deep = tree.nodes.iter().find(|n| n.depth == 2 && n.token == 1).unwrap();
        assert!((deep.global_accept - 0.2).abs() < 1e-15);
    }

    #[test]
    fn one_hot_dynamic_is_a_certain_chain() {
        let drafter = one_hot(6, 4);
        let tree = draft_dynamic::<f64, _>(&drafter, &[0], 1, 5, 5).unwrap();
        let stats = tree_stats(&tree);
        assert_eq!((stats.node_count, stats.max_depth), (5, 5));
        assert!(tree.nodes.iter().all(|n| n.global_accept == 1.0 && n.token == 4));
        assert_eq!(tree.drafter_forward_passes, 5);
    }

    #[test]
    fn dispersed_drafter_gives_shallower_dynamic_tree() {
        let uniform = ConstantOracle::new(CategoricalDistribution::<f64>::uniform(100).unwrap());
        let mut peaked_probs = vec![0.1 / 99.0; 100];
        peaked_probs[7] = 0.9;
        let peaked = constant(&peaked_probs);
        let depth = |m: &ConstantOracle<f64>| {
            let tree = draft_dynamic::<f64, _>(m, &[], 2, 59, 6).unwrap();
            let sum: usize = tree.nodes.iter().map(|n| n.depth).sum();
            sum as f64 / tree.len() as f64
        };
        assert!(depth(&uniform) < depth(&peaked));
    }

    #[test]
    fn tree_stats_examples() {
        let drafter = constant(&[0.5, 0.5]);
        let chain = draft_static(&drafter, &[], &StaticTreeSpec::chain(3), DraftMode::TopRank, &mut SessionRng::new(0));
        let s = tree_stats(&chain);
        assert_eq!((s.node_count, s.max_depth, s.mean_leaf_depth, s.mean_fanout), (3, 3, 3.0, 1.0));

        let wide_drafter = constant(&[0.25; 4]);
        let spec = StaticTreeSpec::parse("0 - -\n1 0 0\n2 0 1\n3 0 2\n4 0 3\n").unwrap();
        let wide = draft_static(&wide_drafter, &[], &spec, DraftMode::Sampled, &mut SessionRng::new(0));
        let s = tree_stats(&wide);
        assert_eq!((s.node_count, s.max_depth, s.mean_leaf_depth, s.mean_fanout), (4, 1, 1.0, 4.0));
    }

    /// Full level-by-level expansion followed by one global trim.
    fn dynamic_by_full_expansion(
        probs: &[f64],
        top_k: usize,
        total: usize,
        depth: usize,
    ) -> Vec<(Vec<usize>, f64)> {
        let dist = CategoricalDistribution::new(probs.to_vec()).unwrap();
        let top = dist.top_k_indices(top_k).unwrap();
        let mut all: Vec<(Vec<usize>, f64)> = Vec::new();
        let mut frontier: Vec<(Vec<usize>, f64)> = vec![(vec![], 1.0)];
        for _ in 0..depth {
            let mut next = Vec::new();
            for (path, v) in &frontier {
                for (rank, &tok) in top.iter().enumerate() {
                    let mut p = path.clone();
                    p.push(rank);
                    next.push((p, v * dist.prob(tok)));
                }
            }
            all.extend(next.iter().cloned());
            frontier = next;
        }
        all.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap()
                .then(a.0.len().cmp(&b.0.len()))
                .then(a.0.cmp(&b.0))
        });
        all.truncate(total);
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all
    }

    #[test]
    fn best_first_matches_full_expansion_with_global_trim() {
        let mut rng = SessionRng::new(77);
        for case in 0..60 {
            let vocab = 3 + case % 4;
            let weights: Vec<f64> = (0..vocab).map(|_| rng.uniform() + 0.01).collect();
            let dist = CategoricalDistribution::normalize(weights).unwrap();
            let top_k = 1 + case % 3;
            let depth = 1 + case % 4;
            let total = 1 + (case * 7) % 20;
            let expected = dynamic_by_full_expansion(dist.probs(), top_k, total, depth);
            let tree = draft_dynamic::<f64, _>(&ConstantOracle::new(dist.clone()), &[], top_k, total, depth).unwrap();
            let mut got: Vec<(Vec<usize>, f64)> = (0..tree.len())
                .map(|i| (rank_path(&tree, i), tree.nodes[i].global_accept))
                .collect();
            got.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(got.len(), expected.len(), "case {case}");
            for (g, e) in got.iter().zip(&expected) {
                assert_eq!(g.0, e.0, "case {case}");
                assert!((g.1 - e.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dynamic_rejects_bad_budgets() {
        let drafter = constant(&[0.5, 0.5]);
        assert!(draft_dynamic::<f64, _>(&drafter, &[], 3, 4, 2).is_err());
        assert!(draft_dynamic::<f64, _>(&drafter, &[], 1, 0, 2).is_err());
        assert!(draft_dynamic::<f64, _>(&drafter, &[], 1, 4, 0).is_err());
    }
}
