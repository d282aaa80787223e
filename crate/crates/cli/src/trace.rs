//! Trace analysis: per-round tree shape, global accept decay by depth, and
//! accepted-length histograms.

use std::fmt;
use std::fmt::Write as _;

use anyhow::{Context, Result};
use specdec::RoundTrace;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceReport {
    pub rounds: usize,
    pub mean_nodes: f64,
    /// Mean over rounds of the deepest drafted node.
    pub mean_depth: f64,
    pub mean_leaf_depth: f64,
    pub mean_fanout: f64,
    /// `(depth, mean V, node count)` for every depth that has nodes.
    pub v_by_depth: Vec<(usize, f64, usize)>,
    /// Least-squares slope of `ln(mean V)` against depth.
    pub decay_slope: Option<f64>,
    /// `accept_histogram[n]` counts rounds that accepted `n` drafts.
    pub accept_histogram: Vec<usize>,
    pub mean_accept_len: f64,
}

/// Parses JSON-lines trace text. Blank lines are skipped; a malformed line is
/// reported with its 1-based line number.
pub fn parse_trace(text: &str) -> Result<Vec<RoundTrace>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("trace line {}: malformed record", i + 1)))
        .collect()
}

pub fn analyze(rounds: &[RoundTrace]) -> TraceReport {
    let n = rounds.len();
    let mean = |f: &dyn Fn(&RoundTrace) -> f64| {
        if n == 0 {
            0.0
        } else {
            rounds.iter().map(f).sum::<f64>() / n as f64
        }
    };
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for node in rounds.iter().flat_map(|r| &r.nodes) {
        if sums.len() <= node.depth {
            sums.resize(node.depth + 1, (0.0, 0));
        }
        sums[node.depth].0 += node.global_accept;
        sums[node.depth].1 += 1;
    }
    let v_by_depth: Vec<(usize, f64, usize)> = sums
        .iter()
        .enumerate()
        .filter(|(_, (_, c))| *c > 0)
        .map(|(d, &(s, c))| (d, s / c as f64, c))
        .collect();
    let points: Vec<(f64, f64)> = v_by_depth
        .iter()
        .filter(|(_, v, _)| *v > 0.0)
        .map(|&(d, v, _)| (d as f64, v.ln()))
        .collect();

    let mut accept_histogram = Vec::new();
    for r in rounds {
        if accept_histogram.len() <= r.accepted_len {
            accept_histogram.resize(r.accepted_len + 1, 0);
        }
        accept_histogram[r.accepted_len] += 1;
    }
    TraceReport {
        rounds: n,
        mean_nodes: mean(&|r| r.stats.node_count as f64),
        mean_depth: mean(&|r| r.stats.max_depth as f64),
        mean_leaf_depth: mean(&|r| r.stats.mean_leaf_depth),
        mean_fanout: mean(&|r| r.stats.mean_fanout),
        v_by_depth,
        decay_slope: slope(&points),
        accept_histogram,
        mean_accept_len: mean(&|r| r.accepted_len as f64),
    }
}

fn slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

impl fmt::Display for TraceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rounds: {}", self.rounds)?;
        if self.rounds == 0 {
            return Ok(());
        }
        writeln!(f, "mean nodes per tree: {:.2}", self.mean_nodes)?;
        writeln!(f, "mean tree depth: {:.2}", self.mean_depth)?;
        writeln!(f, "mean leaf depth: {:.2}", self.mean_leaf_depth)?;
        writeln!(f, "mean fan-out: {:.2}", self.mean_fanout)?;
        writeln!(f, "mean accepted length: {:.2}", self.mean_accept_len)?;
        writeln!(f, "global accept by depth:")?;
        for (d, v, c) in &self.v_by_depth {
            writeln!(f, "  depth {d:>3}: mean V {v:.3e} over {c} nodes")?;
        }
        match self.decay_slope {
            Some(s) => writeln!(f, "log-linear decay slope: {s:.4} per level")?,
            None => writeln!(f, "log-linear decay slope: n/a")?,
        }
        writeln!(f, "accepted-length histogram:")?;
        for (len, count) in self.accept_histogram.iter().enumerate() {
            writeln!(f, "  {len:>3}: {count}")?;
        }
        Ok(())
    }
}

const W: f64 = 480.0;
const H: f64 = 300.0;
const PAD: f64 = 40.0;

fn svg_frame(title: &str, x_label: &str, y_label: &str, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>\n\
         <line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"12\" y=\"{}\" transform=\"rotate(-90 12 {})\" text-anchor=\"middle\">{y_label}</text>\n\
         {body}</svg>\n",
        W / 2.0,
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD,
        W / 2.0,
        H - 8.0,
        H / 2.0,
        H / 2.0,
    )
}

/// Line plot of `ln(mean V)` against depth.
pub fn decay_svg(report: &TraceReport) -> String {
    let pts: Vec<(f64, f64)> = report
        .v_by_depth
        .iter()
        .filter(|(_, v, _)| *v > 0.0)
        .map(|&(d, v, _)| (d as f64, v.ln()))
        .collect();
    let mut body = String::new();
    if !pts.is_empty() {
        let (x0, x1) = (0.0, pts.iter().map(|p| p.0).fold(1.0, f64::max));
        let y0 = pts.iter().map(|p| p.1).fold(0.0, f64::min).min(-1e-9);
        let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
        let sy = |y: f64| PAD + (y / y0) * (H - 2.0 * PAD);
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        writeln!(body, "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>", path.join(" ")).unwrap();
        for &(x, y) in &pts {
            writeln!(body, "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"steelblue\"/>", sx(x), sy(y)).unwrap();
        }
        writeln!(body, "<text x=\"{}\" y=\"{}\">{y0:.1}</text>", 2.0, H - PAD).unwrap();
    }
    svg_frame("mean global accept by depth", "depth", "ln mean V", &body)
}

/// Bar chart of the accepted-length histogram.
pub fn histogram_svg(report: &TraceReport) -> String {
    let mut body = String::new();
    let max = report.accept_histogram.iter().copied().max().unwrap_or(0);
    if max > 0 {
        let n = report.accept_histogram.len() as f64;
        let bw = (W - 2.0 * PAD) / n;
        for (i, &c) in report.accept_histogram.iter().enumerate() {
            let h = c as f64 / max as f64 * (H - 2.0 * PAD);
            writeln!(
                body,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"darkorange\"/>",
                PAD + i as f64 * bw + 1.0,
                H - PAD - h,
                (bw - 2.0).max(1.0)
            )
            .unwrap();
        }
    }
    svg_frame("accepted length per round", "accepted drafts", "rounds", &body)
}
