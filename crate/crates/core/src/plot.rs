//! Deterministic SVG rendering for spectra, Q-circles and bias heatmaps.
//!
//! Output depends only on the input data: fixed-precision numbers, no
//! timestamps, no random ids.

use std::fmt::Write;

use crate::extraction::QCircle;
use crate::magnetics::Heatmap;
use crate::spectra::ComplexSpectrum;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
/// Heatmaps are downsampled to at most this many cells per axis.
const MAX_CELLS: usize = 200;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinePlot {
    pub title: String,
    pub y_label: String,
    /// Plot 20·log10 of the values.
    pub log_y: bool,
    /// Frequencies (Hz) marked with vertical lines.
    pub markers: Vec<f64>,
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn axes(&self, out: &mut String, x_label: &str, y_label: &str) {
        let _ = writeln!(
            out,
            r#"<rect x="{MARGIN:.1}" y="{MARGIN:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
            WIDTH - 2.0 * MARGIN,
            HEIGHT - 2.0 * MARGIN
        );
        for (v, anchor_x) in [(self.x.0, MARGIN), (self.x.1, WIDTH - MARGIN)] {
            let _ = writeln!(
                out,
                r#"<text x="{anchor_x:.1}" y="{:.1}" text-anchor="middle">{v:.4e}</text>"#,
                HEIGHT - MARGIN + 16.0
            );
        }
        for (v, anchor_y) in [(self.y.0, HEIGHT - MARGIN), (self.y.1, MARGIN)] {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{anchor_y:.1}" text-anchor="end">{v:.3e}</text>"#,
                MARGIN - 4.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 12.0,
            escape(x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(y_label)
        );
    }
}

fn polyline(out: &mut String, pts: impl Iterator<Item = (f64, f64)>, stroke: &str) {
    out.push_str(r#"<polyline fill="none" stroke=""#);
    out.push_str(stroke);
    out.push_str(r#"" stroke-width="1.2" points=""#);
    for (i, (x, y)) in pts.enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x:.2},{y:.2}");
    }
    out.push_str("\"/>\n");
}

const PALETTE: [&str; 4] = ["#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad"];

fn magnitude_trace(s: &ComplexSpectrum, log_y: bool) -> Vec<f64> {
    s.values()
        .iter()
        .map(|v| if log_y { 20.0 * v.norm().log10() } else { v.norm() })
        .collect()
}

/// Magnitude of a spectrum against frequency.
pub fn line_plot_svg(s: &ComplexSpectrum, opts: &LinePlot) -> String {
    overlay_svg(&[s], opts)
}

/// Magnitudes of several spectra on shared axes, one colour per trace.
///
/// The frequency axis spans the first trace.
pub fn overlay_svg(traces: &[&ComplexSpectrum], opts: &LinePlot) -> String {
    let ys: Vec<Vec<f64>> = traces.iter().map(|s| magnitude_trace(s, opts.log_y)).collect();
    let x = traces
        .first()
        .map_or((0.0, 1.0), |s| (s.grid().start(), s.grid().stop()));
    let frame = Frame {
        x,
        y: range(ys.iter().flatten().copied()),
    };
    let mut out = String::new();
    header(&mut out, &opts.title);
    frame.axes(&mut out, "frequency (Hz)", &opts.y_label);
    for (k, (s, y)) in traces.iter().zip(&ys).enumerate() {
        polyline(
            &mut out,
            s.freqs()
                .iter()
                .zip(y)
                .filter(|(_, y)| y.is_finite())
                .map(|(&f, &y)| (frame.px(f), frame.py(y))),
            PALETTE[k % PALETTE.len()],
        );
    }
    if let Some(first) = traces.first() {
        for &m in opts.markers.iter().filter(|m| first.grid().contains(**m)) {
            let x = frame.px(m);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{MARGIN:.1}" x2="{x:.2}" y2="{:.1}" stroke="#e67e22" stroke-dasharray="4 3"/>"##,
                HEIGHT - MARGIN
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Q-circle trace in the complex reflection plane with the unit circle.
pub fn q_circle_svg(qc: &QCircle, title: &str) -> String {
    let size = HEIGHT - 2.0 * MARGIN;
    let cx = WIDTH / 2.0;
    let cy = HEIGHT / 2.0 + 8.0;
    let r = size / 2.0;
    let mut out = String::new();
    header(&mut out, title);
    let _ = writeln!(
        out,
        r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="{r:.1}" fill="none" stroke="gray"/>"#
    );
    let _ = writeln!(
        out,
        r#"<line x1="{:.1}" y1="{cy:.1}" x2="{:.1}" y2="{cy:.1}" stroke="lightgray"/>"#,
        cx - r,
        cx + r
    );
    polyline(
        &mut out,
        qc.points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|p| (cx + p.0 * r, cy - p.1 * r)),
        "#1f4e9c",
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}">loops: {}</text>"#,
        MARGIN,
        HEIGHT - 12.0,
        qc.loops
    );
    out.push_str("</svg>\n");
    out
}

/// |Z| heatmap (dB scale, grayscale), bias on the x axis and frequency on y.
pub fn heatmap_svg(hm: &Heatmap, title: &str) -> String {
    let nb = hm.biases_t.len();
    let nf = hm.freqs_hz.len();
    let sb = nb.div_ceil(MAX_CELLS).max(1);
    let sf = nf.div_ceil(MAX_CELLS).max(1);
    let db: Vec<f64> = hm.values.iter().map(|v| 20.0 * v.log10()).collect();
    let (lo, hi) = range(db.iter().copied());
    let frame = Frame {
        x: range(hm.biases_t.iter().copied()),
        y: range(hm.freqs_hz.iter().copied()),
    };
    let cols = nb.div_ceil(sb);
    let rows = nf.div_ceil(sf);
    let cw = (WIDTH - 2.0 * MARGIN) / cols as f64;
    let ch = (HEIGHT - 2.0 * MARGIN) / rows as f64;

    let mut out = String::new();
    header(&mut out, title);
    for c in 0..cols {
        for r in 0..rows {
            let i = c * sb;
            let j = r * sf;
            let v = db[i * nf + j];
            let level = if v.is_finite() {
                ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            };
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({level},{level},{level})"/>"#,
                MARGIN + c as f64 * cw,
                HEIGHT - MARGIN - (r + 1) as f64 * ch,
                cw + 0.05,
                ch + 0.05
            );
        }
    }
    frame.axes(&mut out, "bias (T)", "frequency (Hz)");
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::q_circle;
    use crate::spectra::FrequencyGrid;
    use num_complex::Complex64;

    fn spectrum() -> ComplexSpectrum {
        let grid = FrequencyGrid::linspace(1e9, 2e9, 101).unwrap();
        let vals = grid
            .points()
            .iter()
            .map(|f| Complex64::from_polar(0.5, f / 1e8))
            .collect();
        ComplexSpectrum::reflection(grid, vals).unwrap()
    }

    #[test]
    fn line_plot_is_deterministic_and_wellformed() {
        let opts = LinePlot {
            title: "S11 <raw>".into(),
            y_label: "|S11| (dB)".into(),
            log_y: true,
            markers: vec![1.5e9, 5e9],
        };
        let a = line_plot_svg(&spectrum(), &opts);
        assert_eq!(a, line_plot_svg(&spectrum(), &opts));
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert!(a.contains("&lt;raw&gt;"));
        assert_eq!(a.matches("stroke-dasharray").count(), 1);
    }

    #[test]
    fn overlay_draws_one_polyline_per_trace() {
        let s = spectrum();
        let svg = overlay_svg(&[&s, &s], &LinePlot::default());
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(PALETTE[1]));
    }

    #[test]
    fn q_circle_reports_loops() {
        let svg = q_circle_svg(&q_circle(&spectrum()).unwrap(), "qc");
        assert!(svg.contains("loops:"));
    }

    #[test]
    fn heatmap_is_downsampled() {
        let hm = Heatmap {
            biases_t: (0..450).map(|i| 0.2 + i as f64 * 1e-3).collect(),
            freqs_hz: (0..30).map(|i| 1e9 + i as f64 * 1e7).collect(),
            values: (0..450 * 30).map(|k| 1.0 + k as f64).collect(),
        };
        let svg = heatmap_svg(&hm, "map");
        assert_eq!(svg.matches("<rect x=").count(), 150 * 30 + 1);
    }
}
