//! Minimal standalone SVG line charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const ML: f64 = 64.0;
const MR: f64 = 150.0;
const MT: f64 = 36.0;
const MB: f64 = 52.0;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Draw as a right-continuous step function.
    pub step: bool,
    /// Optional `(x, low, high)` band drawn under the line.
    pub band: Vec<(f64, f64, f64)>,
}

impl Series {
    pub fn line(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points, step: false, band: Vec::new() }
    }

    pub fn steps(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points, step: true, band: Vec::new() }
    }
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Dashed `y = x` reference line.
    pub diagonal: bool,
    /// Dashed horizontal reference line.
    pub h_line: Option<f64>,
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
}

impl Chart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            diagonal: false,
            h_line: None,
            x_range: None,
            y_range: None,
        }
    }

    fn extent(&self, pick: impl Fn(&(f64, f64)) -> f64) -> (f64, f64) {
        let vals = self.series.iter().flat_map(|s| s.points.iter().map(&pick)).filter(|v| v.is_finite());
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    }

    pub fn render(&self) -> String {
        let (x0, x1) = self.x_range.unwrap_or_else(|| self.extent(|p| p.0));
        let (y0, y1) = self.y_range.unwrap_or_else(|| {
            let (l, h) = self.extent(|p| p.1);
            let pad = (h - l) * 0.05;
            (l - pad, h + pad)
        });
        let pw = W - ML - MR;
        let ph = H - MT - MB;
        let sx = |x: f64| ML + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MT + ph - (y - y0) / (y1 - y0) * ph;
        let clamp_y = |y: f64| y.clamp(y0, y1);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#, ML + pw / 2.0, esc(&self.title));
        let _ = writeln!(s, r##"<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##);
        for i in 0..=5 {
            let f = i as f64 / 5.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let (px, py) = (sx(xv), sy(yv));
            let _ = writeln!(s, r##"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="#ddd"/>"##, MT, MT + ph);
            let _ = writeln!(s, r##"<line x1="{ML}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" stroke="#ddd"/>"##, ML + pw);
            let _ = writeln!(s, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, MT + ph + 16.0, tick(xv));
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, ML - 6.0, py + 4.0, tick(yv));
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, ML + pw / 2.0, H - 12.0, esc(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            MT + ph / 2.0,
            MT + ph / 2.0,
            esc(&self.y_label)
        );
        if self.diagonal {
            let (lo, hi) = (x0.max(y0), x1.min(y1));
            let _ = writeln!(
                s,
                r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#888" stroke-dasharray="4 4"/>"##,
                sx(lo),
                sy(lo),
                sx(hi),
                sy(hi)
            );
        }
        if let Some(h) = self.h_line {
            let _ = writeln!(
                s,
                r##"<line x1="{ML}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#888" stroke-dasharray="4 4"/>"##,
                sy(h),
                ML + pw,
                sy(h)
            );
        }
        for (i, ser) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            if !ser.band.is_empty() {
                let mut d = String::new();
                for (k, &(x, lo, _)) in ser.band.iter().enumerate() {
                    let _ = write!(d, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, sx(x), sy(clamp_y(lo)));
                }
                for &(x, _, hi) in ser.band.iter().rev() {
                    let _ = write!(d, "L{:.2},{:.2} ", sx(x), sy(clamp_y(hi)));
                }
                let _ = writeln!(s, r#"<path d="{}Z" fill="{color}" fill-opacity="0.18" stroke="none"/>"#, d);
            }
            let pts: Vec<(f64, f64)> = ser.points.iter().copied().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
            if pts.is_empty() {
                continue;
            }
            let mut d = String::new();
            for (k, &(x, y)) in pts.iter().enumerate() {
                if k == 0 {
                    let _ = write!(d, "M{:.2},{:.2} ", sx(x), sy(clamp_y(y)));
                } else {
                    if ser.step {
                        let _ = write!(d, "L{:.2},{:.2} ", sx(x), sy(clamp_y(pts[k - 1].1)));
                    }
                    let _ = write!(d, "L{:.2},{:.2} ", sx(x), sy(clamp_y(y)));
                }
            }
            let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#, d.trim_end());
            let ly = MT + 14.0 + 18.0 * i as f64;
            let lx = ML + pw + 12.0;
            let _ = writeln!(s, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 24.0, ly + 4.0, esc(&ser.name));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_series_and_skips_infinite_points() {
        let mut c = Chart::new("P-P <a & b>", "u", "v");
        c.diagonal = true;
        c.series.push(Series::steps("x", vec![(0.0, 0.0), (1.0, 0.5), (2.0, f64::INFINITY)]));
        let svg = c.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("&lt;a &amp; b&gt;"));
        assert!(!svg.contains("inf"));
        assert_eq!(svg, c.render());
    }

    #[test]
    fn empty_chart_still_renders() {
        let svg = Chart::new("t", "x", "y").render();
        assert!(svg.contains("</svg>"));
    }
}
