//! Miss rate against FPPI on log-log axes, as a standalone SVG.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::evaluator::{Curve, EvalSummary};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub const DEFAULT_RANGE: (f64, f64) = (1e-3, 1e1);

pub struct PlotEntry<'a> {
    pub label: &'a str,
    pub summary: &'a EvalSummary,
}

/// `18.50 (33.20) label`, values in percent.
pub fn legend_text(e: &PlotEntry<'_>) -> String {
    format!("{:.2} ({:.2}) {}", e.summary.mr2 * 100.0, e.summary.mr4 * 100.0, e.label)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Step polyline of the curve restricted to `[lo, hi]`, in data coordinates.
pub fn step_points(curve: &Curve, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut out = vec![(lo, curve.miss_rate_at(lo))];
    for p in curve.points() {
        if p.fppi > lo && p.fppi <= hi {
            let prev = out.last().unwrap().1;
            if p.miss_rate != prev {
                out.push((p.fppi, prev));
                out.push((p.fppi, p.miss_rate));
            }
        }
    }
    let last = out.last().unwrap().1;
    out.push((hi, last));
    out
}

pub fn render_plot(entries: &[PlotEntry<'_>], range: (f64, f64)) -> Result<String> {
    if entries.is_empty() {
        return Err(Error::Config("nothing to plot".into()));
    }
    let (lo, hi) = range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Config(format!("bad FPPI range {lo},{hi}")));
    }
    let series: Vec<Vec<(f64, f64)>> = entries.iter().map(|e| step_points(&e.summary.curve, lo, hi)).collect();
    let smallest = series
        .iter()
        .flatten()
        .map(|p| p.1)
        .filter(|&m| m > 0.0)
        .fold(1.0, f64::min);
    let y_lo = 10f64.powf(smallest.log10().floor()).clamp(1e-3, 0.05);
    let (x0, x1) = (lo.log10(), hi.log10());
    let (y0, y1) = (y_lo.log10(), 0.0);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x.log10() - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y.max(y_lo).log10()) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>"##
    );
    for k in x0.ceil() as i32..=x1.floor() as i32 {
        let x = sx(10f64.powi(k));
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{k}</text>"##,
            TOP + ph,
            TOP + ph + 16.0
        );
    }
    let mut ticks: Vec<f64> = vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.64, 0.8, 1.0];
    if y_lo < 0.05 {
        ticks.insert(0, y_lo);
    }
    for t in ticks {
        let y = sy(t);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{t}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">false positives per image</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">miss rate</text>"#,
        TOP + ph / 2.0
    );
    for (i, (e, pts)) in entries.iter().zip(&series).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = TOP + ph - 12.0 - 16.0 * (entries.len() - 1 - i) as f64;
        let lx = LEFT + 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&legend_text(e))
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(entries: &[PlotEntry<'_>], range: (f64, f64), path: &Path) -> Result<()> {
    let svg = render_plot(entries, range)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
