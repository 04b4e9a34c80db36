//! Static SVG convergence plots: linear SFO axis, logarithmic metric axis.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Values at or below zero are drawn at this floor.
pub const LOG_FLOOR: f64 = 1e-300;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(sfo, value)` with strictly increasing `sfo`.
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotOptions {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: u32,
    pub height: u32,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions {
            title: String::new(),
            x_label: "SFO calls".into(),
            y_label: String::new(),
            width: 640,
            height: 420,
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_sfo(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 {
        format!("{v:.1e}")
    } else {
        format!("{v}")
    }
}

/// Renders every series into one self-contained SVG document.
pub fn emit_plot(series: &[Series], options: &PlotOptions) -> Result<String> {
    if series.is_empty() {
        return Err(Error::InvalidParameter("nothing to plot".into()));
    }
    for s in series {
        if s.points.is_empty() {
            return Err(Error::InvalidParameter(format!("series `{}` is empty", s.label)));
        }
        if s.points.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::InvalidParameter(format!("series `{}`: x must increase strictly", s.label)));
        }
    }
    let mut clamped = 0usize;
    let logs: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .map(|&(x, y)| {
                    let y = if y > 0.0 && y.is_finite() {
                        y
                    } else {
                        clamped += 1;
                        if y == f64::INFINITY { f64::MAX } else { LOG_FLOOR }
                    };
                    (x, y.log10())
                })
                .collect()
        })
        .collect();

    let all = logs.iter().flatten();
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));

    let (w, h) = (options.width as f64, options.height as f64);
    let (left, right, top, bottom) = (70.0, 160.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        options.width, options.height, options.width, options.height
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    if !options.title.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
            left + pw / 2.0,
            escape(&options.title)
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{left:.2}" y="{top:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );

    // decade ticks, thinned to at most ~10 labels
    let decades = (y1 - y0) as i64;
    let stride = (decades / 10 + 1).max(1);
    let mut e = y0 as i64;
    while e <= y1 as i64 {
        let y = sy(e as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{left:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            left + pw
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">1e{e}</text>"#,
            left - 6.0,
            y + 4.0
        );
        e += stride;
    }
    for i in 0..=4 {
        let xv = x0 + (x1 - x0) * i as f64 / 4.0;
        let x = sx(xv);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            top + ph + 16.0,
            fmt_sfo(xv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
        left + pw / 2.0,
        h - 12.0,
        escape(&options.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 {:.2})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(&options.y_label)
    );

    for (i, (s, pts)) in series.iter().zip(&logs).enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    if clamped > 0 {
        let _ = writeln!(
            svg,
            r#"<text x="{left:.2}" y="{:.2}" font-family="sans-serif" font-size="10" fill="gray">{clamped} non-positive value(s) clamped to 1e-300</text>"#,
            top - 6.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
