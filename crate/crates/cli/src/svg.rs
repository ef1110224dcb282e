//! Hand-written SVG for learning curves and per-letter gap charts. Output
//! depends only on the inputs: fixed canvas, fixed number formatting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fsal::engine::{per_class_gap_report, ExperimentResult, GapReport};

use crate::run::read_result;
use crate::{CliError, Result};

const PALETTE: [&str; 6] = [
    "#1f77b4", "#e6a800", "#2ca02c", "#9467bd", "#8c564b", "#17becf",
];
const SHARED_COLOR: &str = "#d62728";

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

/// Mean, min and max over seeds of one learning curve point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub labeled_count: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Learning curve of one result, aggregated over its seeds round by round.
/// Rounds that not every seed reached are dropped.
pub fn curve(result: &ExperimentResult) -> Vec<CurvePoint> {
    let rounds = result
        .replicas
        .iter()
        .map(|r| r.rounds.len())
        .min()
        .unwrap_or(0);
    (0..rounds)
        .map(|t| {
            let recs: Vec<_> = result.replicas.iter().map(|r| &r.rounds[t]).collect();
            let n = recs.len() as f64;
            let accs = recs.iter().map(|r| r.test_accuracy);
            CurvePoint {
                labeled_count: recs.iter().map(|r| r.labeled_count as f64).sum::<f64>() / n,
                mean: accs.clone().sum::<f64>() / n,
                min: accs.clone().fold(f64::INFINITY, f64::min),
                max: accs.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text class="title" x="{:.2}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, x_label: &str, y_label: &str) {
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        out,
        r#"<path class="axes" d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text class="x-label" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text class="y-label" transform="translate(18,{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn y_of(acc: f64, lo: f64, hi: f64) -> f64 {
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    y0 - (acc - lo) / (hi - lo) * (y0 - y1)
}

fn y_ticks(out: &mut String, lo: f64, hi: f64) {
    for i in 0..=5 {
        let v = lo + (hi - lo) * i as f64 / 5.0;
        let y = y_of(v, lo, hi);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0
        );
    }
}

fn legend(out: &mut String, entries: &[(String, &str)]) {
    let x = WIDTH - RIGHT + 15.0;
    for (i, (name, fill)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<g class="legend-entry"><rect x="{x:.2}" y="{:.2}" width="12" height="12" fill="{fill}"/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
            y - 10.0,
            x + 18.0,
            y,
            escape(name)
        );
    }
}

fn check_same_corpus(results: &[ExperimentResult]) -> Result<()> {
    let first = results
        .first()
        .ok_or_else(|| CliError::Render("no result files given".into()))?;
    for r in results {
        if r.corpus.name != first.corpus.name || r.corpus.alphabet != first.corpus.alphabet {
            return Err(CliError::Render(format!(
                "results come from different corpora ({} and {})",
                first.corpus.name, r.corpus.name
            )));
        }
    }
    Ok(())
}

/// Learning curves: mean test accuracy against labels acquired, with a
/// min-max band across seeds, one series per result.
pub fn learning_curve_svg(results: &[ExperimentResult]) -> Result<String> {
    check_same_corpus(results)?;
    let curves: Vec<Vec<CurvePoint>> = results.iter().map(curve).collect();
    let xs = curves.iter().flatten().map(|p| p.labeled_count);
    let x_lo = xs.clone().fold(f64::INFINITY, f64::min);
    let mut x_hi = xs.fold(f64::NEG_INFINITY, f64::max);
    if !(x_hi > x_lo) {
        x_hi = x_lo + 1.0;
    }
    let x_of = |v: f64| LEFT + (v - x_lo) / (x_hi - x_lo) * (WIDTH - LEFT - RIGHT);

    let mut out = String::new();
    header(&mut out, &results[0].corpus.name);
    axes(&mut out, "labels acquired", "test accuracy");
    y_ticks(&mut out, 0.0, 1.0);
    for i in 0..=4 {
        let v = x_lo + (x_hi - x_lo) * i as f64 / 4.0;
        let x = x_of(v);
        let y = HEIGHT - BOTTOM;
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{v:.0}</text>"#,
            y + 5.0,
            y + 18.0
        );
    }
    for (i, (result, points)) in results.iter().zip(&curves).enumerate() {
        let c = color(i);
        let name = escape(&result.config.name);
        let _ = writeln!(out, r#"<g class="series" data-name="{name}">"#);
        let band: Vec<String> = points
            .iter()
            .map(|p| format!("{:.2},{:.2}", x_of(p.labeled_count), y_of(p.max, 0.0, 1.0)))
            .chain(
                points
                    .iter()
                    .rev()
                    .map(|p| format!("{:.2},{:.2}", x_of(p.labeled_count), y_of(p.min, 0.0, 1.0))),
            )
            .collect();
        let _ = writeln!(
            out,
            r#"<polygon class="band" points="{}" fill="{c}" fill-opacity="0.2" stroke="none"/>"#,
            band.join(" ")
        );
        let line: Vec<String> = points
            .iter()
            .map(|p| format!("{:.2},{:.2}", x_of(p.labeled_count), y_of(p.mean, 0.0, 1.0)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="mean" points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#,
            line.join(" ")
        );
        for p in points {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}" data-labeled="{}" data-accuracy="{}"/>"#,
                x_of(p.labeled_count),
                y_of(p.mean, 0.0, 1.0),
                p.labeled_count,
                p.mean
            );
        }
        out.push_str("</g>\n");
    }
    let entries: Vec<(String, &str)> = results
        .iter()
        .enumerate()
        .map(|(i, r)| (r.config.name.clone(), color(i)))
        .collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Grouped per-letter bars (one per result) with gap markers against the
/// first result underneath. Shared letters are labeled in red.
pub fn gap_chart_svg(report: &GapReport) -> String {
    let letters = report.alphabet.len();
    let configs = report.configs.len();
    let plot_w = WIDTH - LEFT - RIGHT;
    let group_w = plot_w / letters as f64;
    let bar_w = group_w * 0.8 / configs as f64;
    // Accuracy bars use the upper 70% of the plot, gap markers the rest.
    let split = TOP + (HEIGHT - BOTTOM - TOP) * 0.7;
    let gap_mid = split + (HEIGHT - BOTTOM - split) / 2.0;
    let gap_scale = (HEIGHT - BOTTOM - split) / 2.0;
    let acc_y = |a: f64| split - a * (split - TOP);

    let mut out = String::new();
    header(
        &mut out,
        &format!("per-letter accuracy at round {}", report.round),
    );
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let _ = writeln!(
        out,
        r#"<path class="axes" d="M{x0:.2},{TOP:.2} L{x0:.2},{:.2} L{x1:.2},{:.2}" fill="none" stroke="black"/>"#,
        HEIGHT - BOTTOM,
        HEIGHT - BOTTOM
    );
    let _ = writeln!(
        out,
        r#"<line class="gap-zero" x1="{x0:.2}" y1="{gap_mid:.2}" x2="{x1:.2}" y2="{gap_mid:.2}" stroke="gray" stroke-dasharray="3,3"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text class="y-label" transform="translate(18,{:.2}) rotate(-90)" text-anchor="middle">test accuracy</text>"#,
        (TOP + split) / 2.0
    );
    let _ = writeln!(
        out,
        r#"<text class="y-label" transform="translate(18,{gap_mid:.2}) rotate(-90)" text-anchor="middle">gap</text>"#
    );
    for (l, letter) in report.alphabet.iter().enumerate() {
        let gx = LEFT + group_w * l as f64 + group_w * 0.1;
        let fill = if report.shared[l] {
            SHARED_COLOR
        } else {
            "black"
        };
        let _ = writeln!(
            out,
            r#"<text class="letter" x="{:.2}" y="{:.2}" text-anchor="middle" fill="{fill}" data-shared="{}">{}</text>"#,
            LEFT + group_w * (l as f64 + 0.5),
            HEIGHT - BOTTOM + 16.0,
            report.shared[l],
            escape(letter)
        );
        for c in 0..configs {
            let x = gx + bar_w * c as f64;
            if let Some(a) = report.accuracy[c][l] {
                let _ = writeln!(
                    out,
                    r#"<rect class="bar" x="{x:.2}" y="{:.2}" width="{bar_w:.2}" height="{:.2}" fill="{}" data-letter="{}" data-config="{c}" data-accuracy="{a}"/>"#,
                    acc_y(a),
                    split - acc_y(a),
                    color(c),
                    escape(letter)
                );
            }
            if c == 0 {
                continue;
            }
            if let Some(g) = report.gap[c][l] {
                let h = g.abs() * gap_scale;
                let y = if g >= 0.0 { gap_mid - h } else { gap_mid };
                let _ = writeln!(
                    out,
                    r#"<rect class="gap" x="{x:.2}" y="{y:.2}" width="{bar_w:.2}" height="{h:.2}" fill="{}" data-letter="{}" data-config="{c}" data-gap="{g}"/>"#,
                    color(c),
                    escape(letter)
                );
            }
        }
    }
    let entries: Vec<(String, &str)> = report
        .configs
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), color(i)))
        .collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}

fn write_svg(path: &Path, svg: &str) -> Result<()> {
    fs::write(path, svg).map_err(|e| CliError::io(path, e))
}

/// Renders the learning curves of `inputs` (result files or run
/// directories) into `output`.
pub fn cmd_plot(inputs: &[impl AsRef<Path>], output: &Path) -> Result<()> {
    let results = inputs
        .iter()
        .map(|p| read_result(p.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    write_svg(output, &learning_curve_svg(&results)?)
}

/// Letters listed in a shared-letter file: separated by whitespace or
/// commas, `#` starts a comment.
pub fn parse_shared_letters(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or_default())
        .flat_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Renders the per-letter gap chart of `inputs` at `round` into `output`.
pub fn cmd_gap_chart(
    inputs: &[impl AsRef<Path>],
    round: usize,
    shared_file: Option<&Path>,
    output: &Path,
) -> Result<()> {
    let results = inputs
        .iter()
        .map(|p| read_result(p.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let shared = match shared_file {
        Some(p) => parse_shared_letters(&fs::read_to_string(p).map_err(|e| CliError::io(p, e))?),
        None => Vec::new(),
    };
    let report = per_class_gap_report(&results, round, &shared)?;
    write_svg(output, &gap_chart_svg(&report))
}
