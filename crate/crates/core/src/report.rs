//! SVG charts and a markdown summary of a finished sweep.
//!
//! All numbers are written with six significant digits and the canvas size
//! is fixed, so identical inputs give byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::analysis::{per_k_means, DegradationReport, Metric};
use crate::error::{Error, Result};
use crate::metrics::MacroReport;
use crate::sweep::SweepRow;
use crate::util::{sig6, write_atomic};

const PANEL_W: f64 = 460.0;
const PANEL_H: f64 = 320.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;

const BAR_COLORS: [&str; 3] = ["#4c72b0", "#dd8452", "#55a868"];
const POINT_COLOR: &str = "#4c72b0";
const LINE_COLOR: &str = "#c44e52";

/// One set of points, optionally with a fitted line `y = a + b x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(k, value, seed)`.
    pub points: Vec<(usize, f64, u64)>,
    pub line: Option<(f64, f64)>,
}

/// A single line-plot panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub k_range: (usize, usize),
    pub y_range: (f64, f64),
    pub series: Vec<Series>,
    pub annotation: Option<String>,
}

impl PlotSpec {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.k_range;
        for s in &self.series {
            if let Some((k, _, _)) = s.points.iter().find(|(k, _, _)| *k < lo || *k > hi) {
                return Err(Error::arg(format!(
                    "point at K={k} lies outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn n(x: f64) -> String {
    sig6(x)
}

fn svg_open(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
        w = n(width),
        h = n(height)
    );
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#,
        n(width),
        n(height)
    );
}

/// Draws one panel with its top-left corner at `(ox, oy)`.
fn render_panel(out: &mut String, spec: &PlotSpec, id: &str, ox: f64, oy: f64) {
    let (k_lo, k_hi) = spec.k_range;
    let x0 = k_lo as f64 - 0.5;
    let x1 = k_hi as f64 + 0.5;
    let (y0, y1) = spec.y_range;
    let left = ox + MARGIN_L;
    let top = oy + MARGIN_T;
    let pw = PANEL_W - MARGIN_L - MARGIN_R;
    let ph = PANEL_H - MARGIN_T - MARGIN_B;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

    let _ = writeln!(out, r#"<g class="panel" id="{}">"#, escape(id));
    let _ = writeln!(
        out,
        r#"<clipPath id="clip-{}"><rect x="{}" y="{}" width="{}" height="{}"/></clipPath>"#,
        escape(id),
        n(left),
        n(top),
        n(pw),
        n(ph)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
        n(left + pw / 2.0),
        n(oy + 22.0),
        escape(&spec.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
        n(left),
        n(top),
        n(pw),
        n(ph)
    );
    for i in 0..=5 {
        let v = y0 + (y1 - y0) * i as f64 / 5.0;
        let y = sy(v);
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{}</text>"##,
            n(left),
            n(left + pw),
            n(left - 6.0),
            n(y + 4.0),
            n(v),
            y = n(y)
        );
    }
    let span = k_hi - k_lo + 1;
    let step = span.div_ceil(20).max(1);
    for k in (k_lo..=k_hi).step_by(step) {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{k}</text>"#,
            n(sx(k as f64)),
            n(top + ph + 16.0)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        n(left + pw / 2.0),
        n(top + ph + 36.0),
        escape(&spec.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="{x}" y="{y}" text-anchor="middle" transform="rotate(-90 {x} {y})">{}</text>"#,
        escape(&spec.y_label),
        x = n(ox + 16.0),
        y = n(top + ph / 2.0)
    );
    for s in &spec.series {
        if let Some((a, b)) = s.line {
            let _ = writeln!(
                out,
                r#"<line class="fit" x1="{}" y1="{}" x2="{}" y2="{}" stroke="{LINE_COLOR}" stroke-width="1.5" clip-path="url(#clip-{})"/>"#,
                n(sx(x0)),
                n(sy(a + b * x0)),
                n(sx(x1)),
                n(sy(a + b * x1)),
                escape(id)
            );
        }
        for &(k, v, seed) in &s.points {
            let _ = writeln!(
                out,
                r#"<circle class="point" data-k="{k}" data-seed="{seed}" data-value="{}" cx="{}" cy="{}" r="3" fill="{POINT_COLOR}" fill-opacity="0.7"/>"#,
                n(v),
                n(sx(k as f64)),
                n(sy(v.clamp(y0, y1)))
            );
        }
    }
    if let Some(note) = &spec.annotation {
        let _ = writeln!(
            out,
            r#"<text class="annotation" x="{}" y="{}">{}</text>"#,
            n(left + 8.0),
            n(top + ph - 10.0),
            escape(note)
        );
    }
    let _ = writeln!(out, "</g>");
}

/// Builds the four metric panels: one point per row, plus the fitted line
/// and its slope and R² when `fits` is given.
pub fn metric_panels(rows: &[SweepRow], fits: Option<&DegradationReport>) -> Result<Vec<PlotSpec>> {
    if rows.is_empty() {
        return Err(Error::arg("no sweep rows to plot"));
    }
    let k_lo = rows.iter().map(|r| r.k).min().unwrap_or(1);
    let k_hi = rows.iter().map(|r| r.k).max().unwrap_or(1);
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by_key(|r| (r.k, r.seed, r.backend.id()));
    Ok(Metric::ALL
        .iter()
        .map(|&m| {
            let fit = fits.and_then(|f| f.fits.get(&m));
            PlotSpec {
                title: m.label().to_string(),
                x_label: "number of classes K".to_string(),
                y_label: m.label().to_string(),
                k_range: (k_lo, k_hi),
                y_range: (0.0, 1.0),
                series: vec![Series {
                    label: m.as_str().to_string(),
                    points: sorted.iter().map(|r| (r.k, m.of(r), r.seed)).collect(),
                    line: fit.map(|f| (f.intercept, f.slope)),
                }],
                annotation: fit
                    .map(|f| format!("slope {}  R² {}", sig6(f.slope), sig6(f.r_squared))),
            }
        })
        .collect())
}

/// SVG text of the 2x2 metric-vs-K figure.
pub fn metrics_vs_k_svg(rows: &[SweepRow], fits: Option<&DegradationReport>) -> Result<String> {
    let panels = metric_panels(rows, fits)?;
    let mut out = String::new();
    svg_open(&mut out, 2.0 * PANEL_W, 2.0 * PANEL_H);
    for (i, spec) in panels.iter().enumerate() {
        spec.validate()?;
        let ox = (i % 2) as f64 * PANEL_W;
        let oy = (i / 2) as f64 * PANEL_H;
        render_panel(&mut out, spec, Metric::ALL[i].as_str(), ox, oy);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn plot_metrics_vs_k(
    rows: &[SweepRow],
    fits: Option<&DegradationReport>,
    path: &Path,
) -> Result<()> {
    write_atomic(path, metrics_vs_k_svg(rows, fits)?.as_bytes())
}

/// SVG text of grouped precision/recall/F1 bars, one group per class.
pub fn per_class_svg(report: &MacroReport, names: &[String]) -> Result<String> {
    if report.k != names.len() || report.per_class.len() != names.len() {
        return Err(Error::arg(format!(
            "report has {} classes but {} names were given",
            report.k,
            names.len()
        )));
    }
    let group_w = 54.0;
    let bar_w = 14.0;
    let left = 120.0;
    let top = 50.0;
    let ph = 300.0;
    let label_room = 170.0;
    let width = left + group_w * names.len() as f64 + 140.0;
    let height = top + ph + label_room;
    let sy = |v: f64| top + (1.0 - v.clamp(0.0, 1.0)) * ph;
    let mut out = String::new();
    svg_open(&mut out, width, height);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">Per-class scores, K = {}</text>"#,
        n(width / 2.0),
        report.k
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{}</text>"##,
            n(left),
            n(left + group_w * names.len() as f64),
            n(left - 6.0),
            n(sy(v) + 4.0),
            n(v),
            y = n(sy(v))
        );
    }
    for (g, (cm, name)) in report.per_class.iter().zip(names).enumerate() {
        let gx = left + g as f64 * group_w + (group_w - 3.0 * bar_w) / 2.0;
        let _ = writeln!(
            out,
            r#"<g class="class-group" data-class="{}">"#,
            cm.class_index
        );
        for (b, (v, label)) in [
            (cm.precision, "precision"),
            (cm.recall, "recall"),
            (cm.f1, "f1"),
        ]
        .into_iter()
        .enumerate()
        {
            let y = sy(v);
            let _ = writeln!(
                out,
                r#"<rect class="bar {label}" data-value="{}" x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
                n(v),
                n(gx + b as f64 * bar_w),
                n(y),
                n(bar_w),
                n(top + ph - y),
                BAR_COLORS[b]
            );
        }
        let lx = gx + 1.5 * bar_w;
        let ly = top + ph + 12.0;
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{y}" text-anchor="end" transform="rotate(-45 {x} {y})">{}</text>"#,
            escape(name),
            x = n(lx),
            y = n(ly)
        );
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(
        out,
        r##"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#333"/>"##,
        n(left),
        n(left + group_w * names.len() as f64),
        y = n(top + ph)
    );
    let lx = left + group_w * names.len() as f64 + 20.0;
    for (b, label) in ["precision", "recall", "F1"].iter().enumerate() {
        let ly = top + 10.0 + b as f64 * 20.0;
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{label}</text>"#,
            n(lx),
            n(ly),
            BAR_COLORS[b],
            n(lx + 18.0),
            n(ly + 10.0)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn plot_per_class(report: &MacroReport, names: &[String], path: &Path) -> Result<()> {
    write_atomic(path, per_class_svg(report, names)?.as_bytes())
}

/// Rates inside this band (percentage points per class) are reported as
/// close to the 1 %/class reference.
pub const REFERENCE_RATE_BAND: (f64, f64) = (0.5, 1.5);

/// Markdown summary: per-K mean table, fitted rates and R², and a pointer to
/// the run manifest.
pub fn summarize(rows: &[SweepRow], report: Option<&DegradationReport>, manifest: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Sweep summary\n");
    let _ = writeln!(out, "Run manifest: `{manifest}`\n");
    let seeds_per_k = |k: usize| rows.iter().filter(|r| r.k == k).count();
    let _ = writeln!(out, "| K | runs | precision | recall | F1 | accuracy |");
    let _ = writeln!(out, "|---:|---:|---:|---:|---:|---:|");
    for (k, m) in per_k_means(rows) {
        let _ = writeln!(
            out,
            "| {k} | {} | {:.4} | {:.4} | {:.4} | {:.4} |",
            seeds_per_k(k),
            m[0],
            m[1],
            m[2],
            m[3]
        );
    }
    out.push('\n');
    let fits = report.filter(|r| !r.fits.is_empty());
    match fits {
        None => {
            let _ = writeln!(
                out,
                "No fitted lines: the sweep has fewer than two distinct K, so no degradation rate is reported."
            );
        }
        Some(rep) => {
            let _ = writeln!(out, "## Degradation rates\n");
            if !rep.include_k1 {
                let _ = writeln!(out, "The K=1 point is excluded from the fits.\n");
            }
            for (m, f) in &rep.fits {
                let _ = writeln!(
                    out,
                    "- {}: {} %/class (slope {}, intercept {}, R² {}, {} points)",
                    m.label(),
                    sig6(f.rate_percent_per_class),
                    sig6(f.slope),
                    sig6(f.intercept),
                    sig6(f.r_squared),
                    f.n_points
                );
            }
            let (lo, hi) = REFERENCE_RATE_BAND;
            let close: Vec<&str> = rep
                .fits
                .iter()
                .filter(|(_, f)| (lo..=hi).contains(&f.rate_percent_per_class))
                .map(|(m, _)| m.label())
                .collect();
            out.push('\n');
            if !close.is_empty() {
                let _ = writeln!(
                    out,
                    "Close to the 1 %/class reference rate: {}.",
                    close.join(", ")
                );
            }
        }
    }
    out
}
