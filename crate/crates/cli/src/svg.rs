//! Minimal SVG output: scatter plots and trajectory polylines over the
//! first two coordinates.

use std::fmt::Write as _;

pub struct SvgCanvas {
    body: String,
    min: (f64, f64),
    max: (f64, f64),
}

const SIZE: f64 = 640.0;
const PAD: f64 = 30.0;

impl SvgCanvas {
    pub fn new() -> Self {
        SvgCanvas {
            body: String::new(),
            min: (f64::INFINITY, f64::INFINITY),
            max: (f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    fn cover(&mut self, x: f64, y: f64) {
        self.min.0 = self.min.0.min(x);
        self.min.1 = self.min.1.min(y);
        self.max.0 = self.max.0.max(x);
        self.max.1 = self.max.1.max(y);
    }

    pub fn scatter(&mut self, points: &[(f64, f64)], color: &str, radius: f64) {
        for &(x, y) in points {
            self.cover(x, y);
            writeln!(self.body, r#"<circle cx="{x:.4}" cy="{y:.4}" r="{radius}" fill="{color}" fill-opacity="0.6"/>"#)
                .expect("string write");
        }
    }

    pub fn polyline(&mut self, path: &[(f64, f64)], color: &str) {
        if path.len() < 2 {
            return;
        }
        let mut points = String::new();
        for &(x, y) in path {
            self.cover(x, y);
            write!(points, "{x:.4},{y:.4} ").expect("string write");
        }
        writeln!(
            self.body,
            r#"<polyline points="{points}" fill="none" stroke="{color}" stroke-width="0.01" stroke-opacity="0.8"/>"#
        )
        .expect("string write");
    }

    /// Final document; data coordinates are mapped by a viewBox with a
    /// y-flip so larger y renders upward.
    pub fn finish(self) -> String {
        let (w, h) = (
            (self.max.0 - self.min.0).max(1e-9),
            (self.max.1 - self.min.1).max(1e-9),
        );
        let margin = 0.05 * w.max(h);
        format!(
            concat!(
                r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" "#,
                r#"viewBox="{x0} {y0} {vw} {vh}">"#,
                "\n<g transform=\"translate(0,{flip}) scale(1,-1)\">\n{body}</g>\n</svg>\n"
            ),
            size = SIZE + 2.0 * PAD,
            x0 = self.min.0 - margin,
            y0 = -(self.max.1 + margin),
            vw = w + 2.0 * margin,
            vh = h + 2.0 * margin,
            flip = 0.0,
            body = self.body,
        )
    }
}

/// Color cycle for per-root or per-time series.
pub fn palette(k: usize) -> &'static str {
    const COLORS: [&str; 8] = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
    ];
    COLORS[k % COLORS.len()]
}
