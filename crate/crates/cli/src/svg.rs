//! Minimal SVG plots. Coordinates are printed with fixed precision so the
//! output is stable across platforms.

use std::fmt::Write;

const W: f64 = 480.0;
const H: f64 = 480.0;
const PAD: f64 = 48.0;
const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Drawn as a polyline when true, as dots otherwise.
    pub line: bool,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(series: &[Series], square: bool) -> Frame {
        let pts = series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter(|(x, y)| x.is_finite() && y.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if square {
            let r = (x1 - x0).max(y1 - y0) / 2.0;
            let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
            (x0, x1, y0, y1) = (cx - r, cx + r, cy - r, cy + r);
        }
        let (dx, dy) = ((x1 - x0).max(1e-12) * 0.05, (y1 - y0).max(1e-12) * 0.05);
        Frame {
            x0: x0 - dx,
            x1: x1 + dx,
            y0: y0 - dy,
            y1: y1 + dy,
        }
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render(title: &str, xlabel: &str, ylabel: &str, series: &[Series], square: bool) -> String {
    let f = Frame::fit(series, square);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        W / 2.0,
        esc(title)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 10.0,
        esc(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(ylabel)
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let (x, y) = (f.x0 + t * (f.x1 - f.x0), f.y0 + t * (f.y1 - f.y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            f.px(x),
            H - PAD + 14.0,
            tick(x)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            PAD - 4.0,
            f.py(y) + 4.0,
            tick(y)
        );
    }
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts = ser.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite());
        if ser.line {
            let path: Vec<String> = pts.map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            );
        } else {
            for &(x, y) in pts {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}"/>"#,
                    f.px(x),
                    f.py(y)
                );
            }
        }
        if !ser.label.is_empty() {
            let ly = PAD + 14.0 + 14.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#,
                W - PAD - 110.0,
                ly - 9.0
            );
            let _ = writeln!(s, r#"<text x="{}" y="{ly}">{}</text>"#, W - PAD - 96.0, esc(&ser.label));
        }
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

/// Equal-aspect scatter plot of planar points.
pub fn scatter(title: &str, points: &[(f64, f64)]) -> String {
    let s = [Series {
        label: String::new(),
        points: points.to_vec(),
        line: false,
    }];
    render(title, "Re", "Im", &s, true)
}

pub fn lines(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    render(title, xlabel, ylabel, series, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_has_one_circle_per_point() {
        let svg = scatter("t", &[(0.0, 0.0), (1.0, 1.0), (-1.0, 0.5)]);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn escapes_labels_and_skips_nan() {
        let s = [Series {
            label: "a<b".into(),
            points: vec![(0.0, 1.0), (f64::NAN, 2.0), (1.0, 0.0)],
            line: true,
        }];
        let svg = lines("x & y", "x", "y", &s);
        assert!(svg.contains("a&lt;b") && svg.contains("x &amp; y"));
        assert!(!svg.contains("NaN"));
    }
}
