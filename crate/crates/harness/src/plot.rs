//! Deterministic SVG rendering of line plots and heatmaps. The same input
//! always produces byte-identical output.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::eval::HeatmapReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        W / 2.0,
        esc(title)
    )
}

/// Render a line plot. Every point gets a marker; series with two or more
/// points are also joined by a line. Non-finite points are skipped.
pub fn line_plot_svg(plot: &LinePlot) -> Result<String> {
    let finite = |p: &&(f64, f64)| p.0.is_finite() && p.1.is_finite();
    if plot.series.iter().all(|s| s.points.iter().filter(finite).count() == 0) {
        return Err(HarnessError::Config(format!("plot {:?} has no data points", plot.title)));
    }
    let all = || plot.series.iter().flat_map(|s| s.points.iter().filter(finite));
    let (x0, x1) = range(all().map(|p| p.0));
    let (y0, y1) = range(all().map(|p| p.1));
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;
    let mut s = header(&plot.title);
    let _ = writeln!(s, "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>");
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", sx(xv), TOP + ph + 18.0, fmt_tick(xv));
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>", LEFT - 6.0, sy(yv) + 4.0, fmt_tick(yv));
    }
    let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", LEFT + pw / 2.0, H - 16.0, esc(&plot.x_label));
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>",
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        esc(&plot.y_label)
    );
    for (k, series) in plot.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<(f64, f64)> = series.points.iter().filter(finite).map(|p| (sx(p.0), sy(p.1))).collect();
        if pts.len() >= 2 {
            let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>", path.join(" "));
        }
        for (x, y) in &pts {
            let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{color}\"/>");
        }
        let ly = TOP + 14.0 + 18.0 * k as f64;
        let _ = writeln!(s, "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"12\" height=\"3\" fill=\"{color}\"/>", W - RIGHT + 12.0, ly - 4.0);
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{ly:.2}\">{}</text>", W - RIGHT + 30.0, esc(&series.name));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Render a threshold heatmap. Axis labels are the thresholds stored in the
/// report.
pub fn heatmap_svg(h: &HeatmapReport, title: &str) -> Result<String> {
    let (rows, cols) = (h.position_thresholds.len(), h.orientation_thresholds_deg.len());
    if rows == 0 || cols == 0 || h.success.len() != rows || h.success.iter().any(|r| r.len() != cols) {
        return Err(HarnessError::Config("heatmap report has inconsistent dimensions".into()));
    }
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let (cw, ch) = (pw / cols as f64, ph / rows as f64);
    let mut s = header(title);
    for (i, row) in h.success.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let v = v.clamp(0.0, 1.0);
            let shade = (255.0 * (1.0 - v)).round() as u8;
            let (x, y) = (LEFT + j as f64 * cw, TOP + i as f64 * ch);
            let _ = writeln!(
                s,
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{cw:.2}\" height=\"{ch:.2}\" fill=\"rgb({shade},{shade},255)\" stroke=\"white\"/>"
            );
            let text = if v > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                s,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"{text}\">{:.1}%</text>",
                x + cw / 2.0,
                y + ch / 2.0 + 4.0,
                100.0 * v
            );
        }
    }
    for (j, r) in h.orientation_thresholds_deg.iter().enumerate() {
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", LEFT + (j as f64 + 0.5) * cw, TOP + ph + 18.0, fmt_tick(*r));
    }
    for (i, p) in h.position_thresholds.iter().enumerate() {
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>", LEFT - 6.0, TOP + (i as f64 + 0.5) * ch + 4.0, fmt_tick(p * 100.0));
    }
    let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">orientation threshold (deg)</text>", LEFT + pw / 2.0, H - 16.0);
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">position threshold (cm)</text>",
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}
