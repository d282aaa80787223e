//! Command implementations behind the `specdec` binary.

pub mod config;
pub mod run;
pub mod trace;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

pub use config::ExperimentConfig;

/// Experiment configs shipped with the binary, by file name.
pub const PRESET_CONFIGS: &[(&str, &str)] = &[
    ("table1-inversion.cfg", include_str!("../presets/table1-inversion.cfg")),
    ("lambda-vs-delta.cfg", include_str!("../presets/lambda-vs-delta.cfg")),
    ("tree-ablation.cfg", include_str!("../presets/tree-ablation.cfg")),
    ("shallow-tree.cfg", include_str!("../presets/shallow-tree.cfg")),
];

/// Loads a config file, falling back to a shipped preset of the same name
/// when no such file exists.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    if !path.exists() {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some((_, text)) = PRESET_CONFIGS.iter().find(|(n, _)| *n == name || n.trim_end_matches(".cfg") == name) {
            return ExperimentConfig::parse(text, Path::new(".")).with_context(|| format!("in preset {name}"));
        }
    }
    ExperimentConfig::load(path)
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub written: Vec<PathBuf>,
    pub summary: String,
}

/// `specdec run`: runs the grid and writes CSV (and trace) files into `out_dir`.
/// `seed` overrides the config seed; `threads` sizes the worker pool.
pub fn cmd_run(config: &Path, out_dir: &Path, threads: Option<usize>, seed: Option<u64>) -> Result<RunReport> {
    let cfg = load_config(config)?;
    let seed = seed.unwrap_or(cfg.experiment.seed);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().context("starting worker pool")?;
    let results = pool.install(|| run::run_experiment(&cfg, seed))?;
    let written = run::write_outputs(&cfg, &results, seed, out_dir)?;
    Ok(RunReport {
        written,
        summary: run::summary_text(&cfg, &results),
    })
}

/// `specdec trace`: analyzes a JSON-lines trace; with `plot`, writes
/// `<trace>.decay.svg` and `<trace>.accept.svg` next to it.
pub fn cmd_trace(path: &Path, plot: bool) -> Result<(trace::TraceReport, Vec<PathBuf>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rounds = trace::parse_trace(&text).with_context(|| format!("in {}", path.display()))?;
    let report = trace::analyze(&rounds);
    let mut plots = Vec::new();
    if plot {
        for (suffix, svg) in [("decay", trace::decay_svg(&report)), ("accept", trace::histogram_svg(&report))] {
            let mut name = path.as_os_str().to_owned();
            name.push(format!(".{suffix}.svg"));
            let out = PathBuf::from(name);
            std::fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))?;
            plots.push(out);
        }
    }
    Ok((report, plots))
}

/// `specdec dump-tree`: the spec text of a named static tree preset.
pub fn cmd_dump_tree(name: &str) -> Result<String> {
    Ok(specdec::StaticTreeSpec::preset(name)?.to_text())
}
