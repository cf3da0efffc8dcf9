//! Convergence chart and text summary rebuilt from the files of a run directory.

use std::fmt::Write as _;
use std::path::Path;

use super::output::{
    read_baseline_runs, read_generations, write_text, GenerationRow, BASELINE_RUNS_CSV, GENERATIONS_CSV, REPORT_SVG,
    REPORT_TXT,
};
use crate::error::Result;
use crate::stats::summarize;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub generations: usize,
    pub best_accuracy: f64,
    pub final_nabla: f64,
    /// Median validation accuracy of the plain-SGD repeats, when present.
    pub baseline_median: Option<f64>,
}

/// Reads `generations.csv` (and `baseline_runs.csv` if present) from `dir`
/// and writes `report.svg` and `report.txt` next to them.
pub fn report(dir: &Path) -> Result<ReportSummary> {
    let rows = read_generations(&dir.join(GENERATIONS_CSV))?;
    let baseline_path = dir.join(BASELINE_RUNS_CSV);
    let baseline = if baseline_path.exists() {
        let runs = read_baseline_runs(&baseline_path)?;
        let values: Vec<f64> = runs.iter().map(|r| r.validation_accuracy).collect();
        Some(summarize(&values)?.median)
    } else {
        None
    };
    let (svg, text, summary) = render_report(&rows, baseline)?;
    write_text(&dir.join(REPORT_SVG), &svg)?;
    write_text(&dir.join(REPORT_TXT), &text)?;
    Ok(summary)
}

/// Pure rendering: `(svg, text table, summary)`.
pub fn render_report(rows: &[GenerationRow], baseline: Option<f64>) -> Result<(String, String, ReportSummary)> {
    if rows.is_empty() {
        return Err(crate::error::Error::data(format!("{GENERATIONS_CSV} has no generation rows")));
    }
    let best_accuracy = rows.iter().map(|r| r.best_raw).fold(f64::NEG_INFINITY, f64::max);
    let summary = ReportSummary {
        generations: rows.len(),
        best_accuracy,
        final_nabla: rows.last().unwrap().nabla,
        baseline_median: baseline,
    };
    Ok((render_svg(rows, baseline), render_text(rows, &summary), summary))
}

fn render_text(rows: &[GenerationRow], summary: &ReportSummary) -> String {
    let mut out = String::new();
    writeln!(out, "{:>10} {:>10} {:>10} {:>10} {:>10} {:>10}  best_genome", "generation", "best", "median", "min", "nabla", "suppressed").unwrap();
    for r in rows {
        writeln!(
            out,
            "{:>10} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10}  {}",
            r.generation, r.best_raw, r.median_raw, r.min_raw, r.nabla, r.suppressed_count, r.best_genome
        )
        .unwrap();
    }
    writeln!(out).unwrap();
    writeln!(out, "generations:        {}", summary.generations).unwrap();
    writeln!(out, "best accuracy:      {:.6}", summary.best_accuracy).unwrap();
    writeln!(out, "final nabla:        {:.6}", summary.final_nabla).unwrap();
    match summary.baseline_median {
        Some(b) => writeln!(out, "baseline median:    {b:.6}").unwrap(),
        None => writeln!(out, "baseline median:    n/a").unwrap(),
    }
    out
}

fn render_svg(rows: &[GenerationRow], baseline: Option<f64>) -> String {
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;

    let mut lo = rows.iter().map(|r| r.min_raw).fold(f64::INFINITY, f64::min);
    let mut hi = rows.iter().map(|r| r.best_raw).fold(f64::NEG_INFINITY, f64::max);
    if let Some(b) = baseline {
        lo = lo.min(b);
        hi = hi.max(b);
    }
    let pad = ((hi - lo) * 0.1).max(0.01);
    let (lo, hi) = ((lo - pad).max(0.0), (hi + pad).min(1.0));

    let first = rows[0].generation as f64;
    let last = rows[rows.len() - 1].generation as f64;
    let x = |g: f64| {
        if last > first {
            LEFT + (g - first) / (last - first) * plot_w
        } else {
            LEFT + plot_w / 2.0
        }
    };
    let y = |v: f64| TOP + (hi - v) / (hi - lo) * plot_h;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">Validation accuracy per generation</text>"#, LEFT + plot_w / 2.0).unwrap();
    writeln!(
        s,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#
    )
    .unwrap();

    // y ticks
    for k in 0..=5 {
        let v = lo + (hi - lo) * k as f64 / 5.0;
        let py = y(v);
        writeln!(s, r##"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT:.2}" y2="{py:.2}" stroke="black"/>"##, LEFT - 5.0).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#, LEFT - 8.0, py + 4.0).unwrap();
    }
    // x ticks, at most ~12 labels
    let step = rows.len().div_ceil(12).max(1);
    for (i, r) in rows.iter().enumerate() {
        if i % step != 0 && i + 1 != rows.len() {
            continue;
        }
        let px = x(r.generation as f64);
        let bottom = TOP + plot_h;
        writeln!(s, r#"<line x1="{px:.2}" y1="{bottom:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, bottom + 5.0).unwrap();
        writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, bottom + 20.0, r.generation).unwrap();
    }
    writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">generation</text>"#, LEFT + plot_w / 2.0, HEIGHT - 15.0).unwrap();

    type Series = (&'static str, &'static str, fn(&GenerationRow) -> f64);
    let series: [Series; 3] = [
        ("best", "#1f77b4", |r| r.best_raw),
        ("median", "#2ca02c", |r| r.median_raw),
        ("min", "#d62728", |r| r.min_raw),
    ];
    for (name, color, value) in series {
        let points: Vec<String> = rows
            .iter()
            .map(|r| format!("{:.2},{:.2}", x(r.generation as f64), y(value(r))))
            .collect();
        writeln!(s, r#"<polyline class="{name}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, points.join(" ")).unwrap();
        for p in &points {
            let (px, py) = p.split_once(',').unwrap();
            writeln!(s, r#"<circle cx="{px}" cy="{py}" r="2.5" fill="{color}"/>"#).unwrap();
        }
    }
    if let Some(b) = baseline {
        let py = y(b);
        writeln!(
            s,
            r#"<line class="baseline" x1="{LEFT:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="gray" stroke-width="2" stroke-dasharray="6 4"/>"#,
            LEFT + plot_w
        )
        .unwrap();
    }

    // legend
    let mut entries = vec![("best", "#1f77b4", ""), ("median", "#2ca02c", ""), ("min", "#d62728", "")];
    if baseline.is_some() {
        entries.push(("SGD baseline", "gray", r#" stroke-dasharray="6 4""#));
    }
    let lx = LEFT + plot_w + 15.0;
    for (i, (label, color, dash)) in entries.iter().enumerate() {
        let ly = TOP + 10.0 + 20.0 * i as f64;
        writeln!(s, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"{dash}/>"#, lx + 25.0).unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}">{label}</text>"#, lx + 32.0, ly + 4.0).unwrap();
    }
    s.push_str("</svg>\n");
    s
}
