//! Running experiment grids and writing their results.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use specdec::engine::{run_session_with, trial_seed};
use specdec::models::TopKTruncated;
use specdec::{compare_methods, CellSummary, Codebook, GridCell, ModelOracle, SessionConfig, SessionRng};

use crate::config::ExperimentConfig;

/// CSV header of every result table.
pub const CSV_COLUMNS: [&str; 11] = [
    "method",
    "tree",
    "k",
    "lambda",
    "delta",
    "trials",
    "mean_S",
    "stderr_S",
    "mean_accept_len",
    "mean_tree_depth",
    "drafter_passes_per_token",
];

#[derive(Debug, Clone)]
pub struct FamilyResult {
    pub family: String,
    pub cells: Vec<GridCell>,
    pub rows: Vec<CellSummary>,
}

type Oracle = Box<dyn ModelOracle<f64>>;

struct FamilyModels {
    target: Oracle,
    drafter: Oracle,
    codebook: Arc<Codebook>,
}

fn build_models(cfg: &ExperimentConfig, family: &str) -> Result<FamilyModels> {
    let fam = cfg.family[family];
    let (target, drafter) = specdec::make_synthetic_pair(fam)?;
    let (target, drafter): (Oracle, Oracle) = match cfg.experiment.top_k_sampling {
        Some(k) => (Box::new(TopKTruncated::new(target, k)), Box::new(TopKTruncated::new(drafter, k))),
        None => (Box::new(target), Box::new(drafter)),
    };
    let mut codebook = match &cfg.codebook.file {
        Some(file) => {
            let path = cfg.base_dir.join(file);
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading codebook {}", path.display()))?;
            Codebook::parse(&text).with_context(|| format!("codebook {}", path.display()))?
        }
        None => Codebook::random(fam.vocab_size, cfg.codebook.dim, cfg.codebook.seed)?,
    };
    if codebook.vocab_size() != fam.vocab_size {
        bail!(
            "codebook has {} codes but family.{family}.vocab_size is {}",
            codebook.vocab_size(),
            fam.vocab_size
        );
    }
    if let Some(&k) = cfg.rules.k.iter().max() {
        codebook.cache_neighbors(k)?;
    }
    Ok(FamilyModels {
        target,
        drafter,
        codebook: Arc::new(codebook),
    })
}

/// Runs every family's grid with base seed `seed`, on the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<FamilyResult>> {
    let grid = cfg.grid()?;
    let mut out = Vec::new();
    for family in cfg.family.keys() {
        let models = build_models(cfg, family)?;
        let rows = compare_methods(
            &grid,
            &models.target,
            &models.drafter,
            Some(&models.codebook),
            cfg.experiment.trials,
            seed,
        )
        .with_context(|| format!("family {family}"))?;
        out.push(FamilyResult {
            family: family.clone(),
            cells: grid.clone(),
            rows,
        });
    }
    Ok(out)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Result rows in the fixed CSV schema. Numbers use fixed precision so that
/// identical runs give identical bytes.
pub fn csv_text(rows: &[CellSummary]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.tree.clone(),
            opt(r.k),
            opt(r.lambda),
            opt(r.delta),
            r.trials.to_string(),
            format!("{:.6}", r.mean_s),
            format!("{:.6}", r.stderr_s),
            format!("{:.6}", r.mean_accept_len),
            format!("{:.6}", r.mean_tree_depth),
            format!("{:.6}", r.drafter_passes_per_token),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Human-readable summary, with the latency proxy if costs are configured.
pub fn summary_text(cfg: &ExperimentConfig, results: &[FamilyResult]) -> String {
    let mut s = String::new();
    for fam in results {
        writeln!(s, "family {}", fam.family).unwrap();
        for r in &fam.rows {
            let rule = match (r.k, r.lambda, r.delta) {
                (Some(k), Some(l), _) => format!("lambda={l} k={k}"),
                (Some(k), _, Some(d)) => format!("delta={d} k={k}"),
                _ => "exact".to_string(),
            };
            write!(
                s,
                "  {:<8} {:<24} {:<18} S={:.3}±{:.3} accept={:.2}",
                r.method, r.tree, rule, r.mean_s, r.stderr_s, r.mean_accept_len
            )
            .unwrap();
            if let Some(c) = cfg.experiment.latency {
                let latency = r.mean_decoding_steps * c.target + r.mean_drafter_passes * c.draft;
                write!(s, " latency={latency:.1}").unwrap();
            }
            s.push('\n');
        }
    }
    s
}

/// Writes `<name>_<family>.csv` per family, plus JSON-lines traces of the
/// first trial of each cell when tracing is enabled. Returns the written paths.
pub fn write_outputs(cfg: &ExperimentConfig, results: &[FamilyResult], seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut written = Vec::new();
    for fam in results {
        let path = out_dir.join(format!("{}_{}.csv", cfg.experiment.name, fam.family));
        std::fs::write(&path, csv_text(&fam.rows)?).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
        if cfg.experiment.trace {
            let models = build_models(cfg, &fam.family)?;
            for (i, cell) in fam.cells.iter().enumerate() {
                let session = SessionConfig {
                    token_budget: cell.token_budget,
                    method: cell.method.clone(),
                    rule: cell.rule,
                    seed: trial_seed(seed, 0),
                };
                let result = run_session_with(
                    &session,
                    &models.target,
                    &models.drafter,
                    Some(&models.codebook),
                    &mut SessionRng::new(session.seed),
                    true,
                )?;
                let mut text = String::new();
                for round in &result.trace {
                    text.push_str(&serde_json::to_string(round)?);
                    text.push('\n');
                }
                let path = out_dir.join(format!("{}_{}_cell{i}.trace.jsonl", cfg.experiment.name, fam.family));
                std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
