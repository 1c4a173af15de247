//! Minimal standalone SVG line charts: fixed 800x500 viewport, optional
//! log-scaled y axis, shaded quartile bands, and dashed lines for ensembled
//! curves.

use crate::error::{Error, Result};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;

const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// One curve, optionally with a shaded lower/upper band.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// lower and upper band edges, same length as xs
    pub band: Option<(Vec<f64>, Vec<f64>)>,
    pub dashed: bool,
}

#[derive(Debug, Clone)]
pub struct ChartSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
}

fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{:.1e}", v)
    } else {
        let s = format!("{:.4}", v);
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s.is_empty() {
            "0".into()
        } else {
            s.to_string()
        }
    }
}

struct Axis {
    min: f64,
    max: f64,
    log: bool,
}

impl Axis {
    fn project(&self, v: f64, lo_px: f64, hi_px: f64) -> f64 {
        let (v, min, max) = if self.log {
            (v.ln(), self.min.ln(), self.max.ln())
        } else {
            (v, self.min, self.max)
        };
        let t = if max > min { (v - min) / (max - min) } else { 0.5 };
        lo_px + t * (hi_px - lo_px)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let lo = self.min.log10().floor() as i32;
            let hi = self.max.log10().ceil() as i32;
            (lo..=hi).map(|e| 10f64.powi(e)).collect()
        } else {
            (0..=5)
                .map(|i| self.min + (self.max - self.min) * i as f64 / 5.0)
                .collect()
        }
    }
}

/// Renders a standalone SVG document for the given series.
pub fn render_chart(spec: &ChartSpec, series: &[Series]) -> Result<String> {
    if series.is_empty() {
        return Err(Error::InvalidArgument("no series to plot".into()));
    }
    let mut xs_all = Vec::new();
    let mut ys_all = Vec::new();
    for s in series {
        if s.xs.len() != s.ys.len() || s.xs.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "series '{}' has mismatched or empty points",
                s.label
            )));
        }
        if let Some((lo, hi)) = &s.band {
            if lo.len() != s.xs.len() || hi.len() != s.xs.len() {
                return Err(Error::InvalidArgument(format!(
                    "series '{}' band length mismatch",
                    s.label
                )));
            }
            ys_all.extend(lo.iter().copied());
            ys_all.extend(hi.iter().copied());
        }
        xs_all.extend(s.xs.iter().copied());
        ys_all.extend(s.ys.iter().copied());
    }
    if spec.log_y && ys_all.iter().any(|&y| y <= 0.0) {
        return Err(Error::InvalidArgument(
            "log-scale y axis requires positive values".into(),
        ));
    }
    let fmin = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let fmax = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (xmin, xmax) = (fmin(&xs_all), fmax(&xs_all));
    let (mut ymin, mut ymax) = (fmin(&ys_all), fmax(&ys_all));
    if ymin == ymax {
        // flat data still needs a nonempty range
        if spec.log_y {
            ymin *= 0.5;
            ymax *= 2.0;
        } else {
            ymin -= 0.5;
            ymax += 0.5;
        }
    } else if !spec.log_y {
        let pad = (ymax - ymin) * 0.05;
        ymin -= pad;
        ymax += pad;
    }
    let x_axis = Axis {
        min: xmin,
        max: xmax,
        log: false,
    };
    let y_axis = Axis {
        min: ymin,
        max: ymax,
        log: spec.log_y,
    };
    let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
    let px = |x: f64| x_axis.project(x, x0, x1);
    let py = |y: f64| y_axis.project(y, y0, y1);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
        w = WIDTH,
        h = HEIGHT
    ));
    svg.push_str(&format!(
        "<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
        WIDTH, HEIGHT
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" font-family=\"sans-serif\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(&spec.title)
    ));

    // axes
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));
    for t in x_axis.ticks() {
        let x = px(t);
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{y0}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n",
            y0 + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">{}</text>\n",
            y0 + 18.0,
            fmt_num(t)
        ));
    }
    for t in y_axis.ticks() {
        if t < y_axis.min || t > y_axis.max {
            continue;
        }
        let y = py(t);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{x0}\" y2=\"{y}\" stroke=\"black\"/>\n",
            x0 - 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">{}</text>\n",
            x0 - 8.0,
            y + 4.0,
            fmt_num(t)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 15.0,
        xml_escape(&spec.x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        xml_escape(&spec.y_label)
    ));

    // bands first so every line stays visible
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if let Some((lo, hi)) = &s.band {
            let mut pts = Vec::new();
            for (j, &x) in s.xs.iter().enumerate() {
                pts.push(format!("{:.2},{:.2}", px(x), py(hi[j])));
            }
            for (j, &x) in s.xs.iter().enumerate().rev() {
                pts.push(format!("{:.2},{:.2}", px(x), py(lo[j])));
            }
            svg.push_str(&format!(
                "<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.18\" stroke=\"none\"/>\n",
                pts.join(" "),
                color
            ));
        }
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .xs
            .iter()
            .zip(&s.ys)
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let dash = if s.dashed {
            " stroke-dasharray=\"8 5\""
        } else {
            ""
        };
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"{}/>\n",
            pts.join(" "),
            color,
            dash
        ));
    }
    // legend
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let ly = MARGIN_TOP + 8.0 + 18.0 * i as f64;
        let dash = if s.dashed {
            " stroke-dasharray=\"8 5\""
        } else {
            ""
        };
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{}\" stroke-width=\"2\"{}/>\n",
            x1 - 170.0,
            x1 - 140.0,
            color,
            dash
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" font-family=\"sans-serif\">{}</text>\n",
            x1 - 132.0,
            ly + 4.0,
            xml_escape(&s.label)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
