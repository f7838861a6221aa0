//! Standalone SVG learning-curve plots generated from episode CSVs.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

const COLORS: &[&str] = &[
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// One labeled curve: (x, y) points in data coordinates.
pub struct Curve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Render curves into a standalone SVG file.
pub fn write_svg(path: &Path, title: &str, x_label: &str, y_label: &str, curves: &[Curve]) -> Result<()> {
    if curves.iter().all(|c| c.points.is_empty()) {
        return Err(Error::Contract("nothing to plot: all curves are empty".into()));
    }
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in curves {
        for &(x, y) in &c.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    if y_max == y_min {
        y_max = y_min + 1.0;
    }
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| MARGIN_TOP + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .expect("string write");
    writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).expect("string write");
    writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        title
    )
    .expect("string write");

    // Axes with a few ticks.
    writeln!(
        svg,
        r#"<line x1="{MARGIN_LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        HEIGHT - MARGIN_BOTTOM,
        WIDTH - MARGIN_RIGHT,
        HEIGHT - MARGIN_BOTTOM
    )
    .expect("string write");
    writeln!(
        svg,
        r#"<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" y2="{}" stroke="black"/>"#,
        HEIGHT - MARGIN_BOTTOM
    )
    .expect("string write");
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{:.0}</text>"#,
            sx(fx),
            HEIGHT - MARGIN_BOTTOM + 18.0,
            fx
        )
        .expect("string write");
        writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{:.1}</text>"#,
            MARGIN_LEFT - 6.0,
            sy(fy) + 4.0,
            fy
        )
        .expect("string write");
        writeln!(
            svg,
            r##"<line x1="{MARGIN_LEFT}" y1="{}" x2="{}" y2="{}" stroke="#dddddd"/>"##,
            sy(fy),
            WIDTH - MARGIN_RIGHT,
            sy(fy)
        )
        .expect("string write");
    }
    writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        x_label
    )
    .expect("string write");
    writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 {})">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        y_label
    )
    .expect("string write");

    for (i, curve) in curves.iter().enumerate() {
        if curve.points.is_empty() {
            continue;
        }
        let color = COLORS[i % COLORS.len()];
        let mut points = String::new();
        for &(x, y) in &curve.points {
            write!(points, "{:.2},{:.2} ", sx(x), sy(y)).expect("string write");
        }
        writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.trim_end()
        )
        .expect("string write");
        writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            WIDTH - MARGIN_RIGHT - 150.0,
            MARGIN_TOP + 16.0 * (i + 1) as f64,
            curve.label
        )
        .expect("string write");
    }
    writeln!(svg, "</svg>").expect("string write");
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
