//! Experiment configuration files.
//!
//! A config is TOML with four kinds of sections:
//!
//! ```toml
//! [experiment]
//! name = "demo"
//! trials = 4
//! token_budget = 128
//! seed = 1
//!
//! [codebook]            # optional; random codes unless `file` is given
//! dim = 8
//! seed = 7
//!
//! [family.peaked]       # one or more synthetic model families
//! vocab_size = 256
//! concentration = 0.15
//! drafter_noise = 0.5
//! context_hash_depth = 2
//! seed = 2024
//!
//! [[method]]            # one entry per drafting method
//! kind = "static"
//! tree = "extended-58"
//!
//! [rules]               # cross product of k with lambda and delta
//! exact = true
//! k = [10]
//! lambda = [3.0]
//! ```
//!
//! The full key reference lives in the repository README.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use specdec::{DraftMode, GridCell, Method, RuleSpec, StaticTreeSpec, SyntheticFamilyConfig};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub codebook: CodebookSection,
    #[serde(default)]
    pub family: BTreeMap<String, SyntheticFamilyConfig>,
    #[serde(default, rename = "method")]
    pub methods: Vec<MethodEntry>,
    #[serde(default)]
    pub rules: RulesSection,
    /// Directory relative paths in the config are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub trials: usize,
    pub token_budget: usize,
    pub seed: u64,
    /// Write a JSON-lines trace of the first trial of every cell.
    #[serde(default)]
    pub trace: bool,
    /// Truncate both models to their `k` most likely tokens before drafting
    /// and verification.
    #[serde(default)]
    pub top_k_sampling: Option<usize>,
    #[serde(default)]
    pub latency: Option<LatencyCosts>,
}

/// Cost constants of the latency proxy `steps * target + drafter_passes * draft`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyCosts {
    pub target: f64,
    pub draft: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodebookSection {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    pub file: Option<PathBuf>,
}

fn default_dim() -> usize {
    8
}

impl Default for CodebookSection {
    fn default() -> Self {
        Self {
            dim: default_dim(),
            seed: 0,
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MethodEntry {
    Baseline,
    Chain {
        gamma: usize,
    },
    Static {
        /// Preset name, or a path to a tree spec file.
        tree: String,
        #[serde(default = "default_mode")]
        mode: DraftMode,
    },
    Dynamic {
        top_k: usize,
        total_nodes: usize,
        depth_budget: usize,
    },
}

fn default_mode() -> DraftMode {
    DraftMode::Sampled
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RulesSection {
    #[serde(default = "default_true")]
    pub exact: bool,
    #[serde(default)]
    pub k: Vec<usize>,
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub delta: Vec<f64>,
}

fn default_true() -> bool {
    true
}

impl Default for RulesSection {
    fn default() -> Self {
        Self {
            exact: true,
            k: Vec::new(),
            lambda: Vec::new(),
            delta: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates config text. Syntax errors carry line and column.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| anyhow::anyhow!("invalid config: {e}"))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, dir).with_context(|| format!("in {}", path.display()))
    }

    fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.name.is_empty() || e.name.contains(['/', '\\']) {
            bail!("experiment.name: must be a non-empty file stem");
        }
        if e.trials == 0 {
            bail!("experiment.trials: must be >= 1");
        }
        if e.token_budget == 0 {
            bail!("experiment.token_budget: must be >= 1");
        }
        if e.top_k_sampling == Some(0) {
            bail!("experiment.top_k_sampling: must be >= 1");
        }
        if self.codebook.dim == 0 {
            bail!("codebook.dim: must be >= 1");
        }
        if self.family.is_empty() {
            bail!("family: at least one [family.NAME] section is required");
        }
        for (name, fam) in &self.family {
            fam.validate().with_context(|| format!("family.{name}"))?;
        }
        if self.methods.is_empty() {
            bail!("method: the method grid is empty; add at least one [[method]] entry");
        }
        for (i, m) in self.methods.iter().enumerate() {
            let method = self.build_method(m).with_context(|| format!("method[{i}]"))?;
            let probe = specdec::SessionConfig {
                token_budget: 1,
                method,
                rule: RuleSpec::Exact,
                seed: 0,
            };
            probe.validate().with_context(|| format!("method[{i}]"))?;
            if let MethodEntry::Dynamic { top_k, .. } = m {
                for (name, fam) in &self.family {
                    if *top_k > fam.vocab_size {
                        bail!("method[{i}].top_k: {top_k} exceeds family.{name}.vocab_size");
                    }
                }
            }
        }
        let r = &self.rules;
        if (!r.lambda.is_empty() || !r.delta.is_empty()) && r.k.is_empty() {
            bail!("rules.k: relaxed rules need at least one k");
        }
        for &k in &r.k {
            for (name, fam) in &self.family {
                if k == 0 || k > fam.vocab_size {
                    bail!("rules.k: {k} is outside 1..={} (family.{name})", fam.vocab_size);
                }
            }
        }
        if let Some(bad) = r.lambda.iter().find(|&&l| !(l > 1.0 && l.is_finite())) {
            bail!("rules.lambda: {bad} is not > 1");
        }
        if let Some(bad) = r.delta.iter().find(|&&d| !(d > 0.0 && d.is_finite())) {
            bail!("rules.delta: {bad} is not > 0");
        }
        if self.rule_grid().is_empty() {
            bail!("rules: no rules selected");
        }
        Ok(())
    }

    pub fn build_method(&self, entry: &MethodEntry) -> Result<Method> {
        Ok(match entry {
            MethodEntry::Baseline => Method::Baseline,
            MethodEntry::Chain { gamma } => Method::Chain { gamma: *gamma },
            MethodEntry::Static { tree, mode } => {
                let spec = if specdec::draft_tree::PRESET_NAMES.contains(&tree.as_str()) {
                    StaticTreeSpec::preset(tree)?
                } else {
                    let path = self.base_dir.join(tree);
                    let text = std::fs::read_to_string(&path).with_context(|| {
                        format!(
                            "tree `{tree}` is neither a preset ({}) nor a readable file",
                            specdec::draft_tree::PRESET_NAMES.join(", ")
                        )
                    })?;
                    StaticTreeSpec::parse(&text).with_context(|| format!("tree file {}", path.display()))?
                };
                Method::StaticTree {
                    name: tree.clone(),
                    spec,
                    mode: *mode,
                }
            }
            MethodEntry::Dynamic {
                top_k,
                total_nodes,
                depth_budget,
            } => Method::DynamicTree {
                top_k: *top_k,
                total_nodes: *total_nodes,
                depth_budget: *depth_budget,
            },
        })
    }

    /// Exact first (if enabled), then multiplicative and additive rules for each k.
    pub fn rule_grid(&self) -> Vec<RuleSpec> {
        let r = &self.rules;
        let mut rules = Vec::new();
        if r.exact {
            rules.push(RuleSpec::Exact);
        }
        for &k in &r.k {
            rules.extend(r.lambda.iter().map(|&lambda| RuleSpec::Multiplicative { k, lambda }));
            rules.extend(r.delta.iter().map(|&delta| RuleSpec::Additive { k, delta }));
        }
        rules
    }

    /// Method x rule cells. The baseline only pairs with the exact rule.
    pub fn grid(&self) -> Result<Vec<GridCell>> {
        let rules = self.rule_grid();
        let mut cells = Vec::new();
        for entry in &self.methods {
            let method = self.build_method(entry)?;
            for &rule in &rules {
                if matches!(method, Method::Baseline) && rule != RuleSpec::Exact {
                    continue;
                }
                cells.push(GridCell {
                    method: method.clone(),
                    rule,
                    token_budget: self.experiment.token_budget,
                });
            }
        }
        if cells.is_empty() {
            bail!("the method and rule grids have no compatible cells");
        }
        Ok(cells)
    }
}
