//! SVG rendering of sweep summaries.

use std::fmt::Write as _;

use permsync::experiment::SUMMARY_HEADER;
use serde::Deserialize;

use crate::CliError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 24.0;
const BOTTOM: f64 = 52.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, Deserialize)]
pub struct SummaryRow {
    pub sigma: f64,
    pub method: String,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub std: Option<f64>,
    pub n_ok: usize,
    pub n_fail: usize,
}

struct BoxStats {
    median: f64,
    q1: f64,
    q3: f64,
    min: f64,
    max: f64,
}

impl SummaryRow {
    fn box_stats(&self) -> Option<BoxStats> {
        Some(BoxStats { median: self.median?, q1: self.q1?, q3: self.q3?, min: self.min?, max: self.max? })
    }
}

pub fn parse_summary(text: &str) -> Result<Vec<SummaryRow>, CliError> {
    let bad = |m: String| CliError::Usage(format!("malformed summary CSV: {m}"));
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
    if header.join(",") != SUMMARY_HEADER {
        return Err(bad(format!("expected header `{SUMMARY_HEADER}`")));
    }
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let row: SummaryRow = rec.map_err(|e| bad(e.to_string()))?;
        if !row.sigma.is_finite() {
            return Err(bad("non-finite sigma".into()));
        }
        let stats = [row.mean, row.median, row.q1, row.q3, row.min, row.max, row.std];
        if stats.iter().flatten().any(|v| !v.is_finite()) {
            return Err(bad("non-finite statistic".into()));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(bad("no data rows".into()));
    }
    Ok(rows)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Methods in order of first appearance.
fn methods(rows: &[SummaryRow]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in rows {
        if !out.contains(&r.method) {
            out.push(r.method.clone());
        }
    }
    out
}

/// Distinct σ values, largest first.
fn sigmas(rows: &[SummaryRow]) -> Vec<f64> {
    let mut s: Vec<f64> = rows.iter().map(|r| r.sigma).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s.dedup();
    s
}

struct Frame {
    ymax: f64,
}

impl Frame {
    fn new(top_value: f64) -> Self {
        let ymax = if top_value > 0.0 { top_value * 1.05 } else { 1.0 };
        Frame { ymax }
    }

    fn y(&self, v: f64) -> f64 {
        TOP + (HEIGHT - TOP - BOTTOM) * (1.0 - v / self.ymax)
    }
}

fn header(out: &mut String, title: &str, frame: &Frame) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.2}" y="16" text-anchor="middle">{}</text>"#, WIDTH / 2.0, esc(title));
    let x1 = WIDTH - RIGHT;
    let y0 = HEIGHT - BOTTOM;
    let _ = writeln!(out, r#"<g class="axes" stroke="black">"#);
    let _ = writeln!(out, r#"<line x1="{LEFT:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/>"#);
    let _ = writeln!(out, r#"<line x1="{LEFT:.2}" y1="{TOP:.2}" x2="{LEFT:.2}" y2="{y0:.2}"/>"#);
    let _ = writeln!(out, "</g>");
    for i in 0..=4 {
        let v = frame.ymax * i as f64 / 4.0;
        let y = frame.y(v);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
            LEFT - 4.0,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">sigma (decreasing)</text>"#,
        (LEFT + x1) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">hamming loss</text>"#,
        (TOP + y0) / 2.0,
        (TOP + y0) / 2.0
    );
}

fn x_tick(out: &mut String, x: f64, sigma: f64) {
    let y0 = HEIGHT - BOTTOM;
    let _ = writeln!(
        out,
        r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{sigma}</text>"#,
        y0 + 4.0,
        y0 + 18.0
    );
}

fn legend(out: &mut String, methods: &[String]) {
    let x = WIDTH - RIGHT + 16.0;
    for (i, m) in methods.iter().enumerate() {
        let y = TOP + 8.0 + 20.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<g class="legend"><rect x="{x:.2}" y="{:.2}" width="14" height="10" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
            y - 9.0,
            COLORS[i % COLORS.len()],
            x + 20.0,
            y,
            esc(m)
        );
    }
}

/// Mean loss against σ, one polyline per method, σ decreasing left to right.
pub fn render_lines(rows: &[SummaryRow]) -> String {
    let methods = methods(rows);
    let sigmas = sigmas(rows);
    let frame = Frame::new(rows.iter().filter_map(|r| r.mean).fold(0.0, f64::max));
    let (hi, lo) = (sigmas[0], sigmas[sigmas.len() - 1]);
    let x1 = WIDTH - RIGHT;
    let x = |s: f64| {
        if hi > lo {
            LEFT + 20.0 + (x1 - LEFT - 40.0) * (hi - s) / (hi - lo)
        } else {
            (LEFT + x1) / 2.0
        }
    };

    let mut out = String::new();
    header(&mut out, "Mean loss", &frame);
    for &s in &sigmas {
        x_tick(&mut out, x(s), s);
    }
    for (i, m) in methods.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts: Vec<(f64, f64)> =
            rows.iter().filter(|r| &r.method == m).filter_map(|r| r.mean.map(|v| (r.sigma, v))).collect();
        pts.sort_by(|a, b| b.0.total_cmp(&a.0));
        let coords: Vec<String> = pts.iter().map(|&(s, v)| format!("{:.2},{:.2}", x(s), frame.y(v))).collect();
        let _ = writeln!(out, r#"<g class="series" data-method="{}">"#, esc(m));
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, coords.join(" "));
        for &(s, v) in &pts {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, x(s), frame.y(v));
        }
        let _ = writeln!(out, "</g>");
    }
    legend(&mut out, &methods);
    out.push_str("</svg>\n");
    out
}

/// Quartile boxes with median lines and 1.5·IQR whiskers, grouped by σ.
pub fn render_box(rows: &[SummaryRow]) -> String {
    let methods = methods(rows);
    let sigmas = sigmas(rows);
    let frame = Frame::new(rows.iter().filter_map(|r| r.max).fold(0.0, f64::max));
    let slot = (WIDTH - RIGHT - LEFT) / sigmas.len() as f64;
    let box_w = (slot * 0.8 / methods.len() as f64).min(40.0);

    let mut out = String::new();
    header(&mut out, "Loss distribution", &frame);
    for (si, &s) in sigmas.iter().enumerate() {
        let center = LEFT + slot * (si as f64 + 0.5);
        x_tick(&mut out, center, s);
        for (mi, m) in methods.iter().enumerate() {
            let Some(row) = rows.iter().find(|r| r.sigma == s && &r.method == m) else {
                continue;
            };
            let Some(b) = row.box_stats() else {
                continue;
            };
            let color = COLORS[mi % COLORS.len()];
            let cx = center + box_w * (mi as f64 - (methods.len() as f64 - 1.0) / 2.0);
            let (l, r) = (cx - box_w * 0.4, cx + box_w * 0.4);
            let iqr = b.q3 - b.q1;
            let lo = b.min.max(b.q1 - 1.5 * iqr);
            let hi = b.max.min(b.q3 + 1.5 * iqr);
            let _ = writeln!(out, r#"<g class="box-group" data-method="{}" data-sigma="{s}" data-ok="{}" data-failed="{}">"#,
                esc(m),
                row.n_ok,
                row.n_fail
            );
            for (from, to) in [(b.q3, hi), (b.q1, lo)] {
                if to != from {
                    let _ = writeln!(
                        out,
                        r#"<line class="whisker" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="3,2"/>"#,
                        frame.y(from),
                        frame.y(to)
                    );
                    let _ = writeln!(
                        out,
                        r#"<line class="cap" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}"/>"#,
                        cx - box_w * 0.2,
                        frame.y(to),
                        cx + box_w * 0.2,
                        frame.y(to)
                    );
                }
            }
            if iqr > 0.0 {
                let _ = writeln!(
                    out,
                    r#"<rect class="box" x="{l:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.25" stroke="{color}"/>"#,
                    frame.y(b.q3),
                    r - l,
                    frame.y(b.q1) - frame.y(b.q3)
                );
            } else {
                // zero-height box
                let _ = writeln!(
                    out,
                    r#"<line class="box degenerate" x1="{l:.2}" y1="{:.2}" x2="{r:.2}" y2="{:.2}" stroke="{color}"/>"#,
                    frame.y(b.q1),
                    frame.y(b.q1)
                );
            }
            let _ = writeln!(
                out,
                r#"<line class="median" x1="{l:.2}" y1="{:.2}" x2="{r:.2}" y2="{:.2}" stroke="{color}" stroke-width="3"/>"#,
                frame.y(b.median),
                frame.y(b.median)
            );
            for v in [b.min, b.max] {
                if v < lo || v > hi {
                    let _ = writeln!(
                        out,
                        r#"<circle class="outlier" cx="{cx:.2}" cy="{:.2}" r="2" fill="{color}"/>"#,
                        frame.y(v)
                    );
                }
            }
            let _ = writeln!(out, "</g>");
        }
    }
    legend(&mut out, &methods);
    out.push_str("</svg>\n");
    out
}
