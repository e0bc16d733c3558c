//! Minimal SVG line charts: categorical x axis, error bars, optional log y.

use std::fmt::Write;

pub struct Series {
    pub label: String,
    /// `(y, half_width)` per x category; NaN points are skipped.
    pub points: Vec<(f64, f64)>,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub categories: Vec<String>,
    pub series: Vec<Series>,
    pub log_y: bool,
}

const W: f64 = 720.0;
const H: f64 = 460.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    mag * if r < 1.5 {
        1.0
    } else if r < 3.5 {
        2.0
    } else if r < 7.5 {
        5.0
    } else {
        10.0
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl Chart {
    pub fn to_svg(&self) -> String {
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let finite: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(|(y, _)| y.is_finite() && (!self.log_y || *y > 0.0))
            .collect();

        let (lo, hi, ticks): (f64, f64, Vec<f64>) = if self.log_y {
            let lo = finite.iter().map(|(y, e)| (y - e.max(0.0)).max(y * 0.1)).fold(f64::INFINITY, f64::min);
            let hi = finite.iter().map(|(y, e)| y + e.max(0.0)).fold(0.0, f64::max);
            let (lo, hi) = if finite.is_empty() { (1.0, 10.0) } else { (lo, hi) };
            let a = lo.log10().floor();
            let b = hi.log10().ceil().max(a + 1.0);
            let ticks = (a as i32..=b as i32).map(|e| 10f64.powi(e)).collect();
            (a, b, ticks)
        } else {
            let hi = finite.iter().map(|(y, e)| y + e.max(0.0)).fold(0.0, f64::max);
            let hi = if hi > 0.0 { hi * 1.05 } else { 1.0 };
            let step = nice_step(hi);
            let top = (hi / step).ceil() * step;
            let ticks = (0..=((top / step).round() as usize)).map(|i| i as f64 * step).collect();
            (0.0, top, ticks)
        };
        let ymap = |y: f64| {
            let v = if self.log_y { y.log10() } else { y };
            TOP + ph * (1.0 - (v - lo) / (hi - lo))
        };
        let n = self.categories.len().max(1);
        let xmap = |i: usize| LEFT + pw * (i as f64 + 0.5) / n as f64;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + pw / 2.0,
            esc(&self.title)
        );
        for &t in &ticks {
            let y = ymap(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{LEFT}" x2="{}" y1="{y:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            svg,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for (i, c) in self.categories.iter().enumerate() {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
                xmap(i),
                TOP + ph + 18.0,
                esc(c)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            H - 16.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text transform="translate(18,{}) rotate(-90)" text-anchor="middle">{}</text>"#,
            TOP + ph / 2.0,
            esc(&self.y_label)
        );

        for (si, s) in self.series.iter().enumerate() {
            let color = COLORS[si % COLORS.len()];
            let pts: Vec<(usize, f64, f64)> = s
                .points
                .iter()
                .enumerate()
                .filter(|(_, (y, _))| y.is_finite() && (!self.log_y || *y > 0.0))
                .map(|(i, &(y, e))| (i, y, e))
                .collect();
            let path: Vec<String> = pts.iter().map(|&(i, y, _)| format!("{:.2},{:.2}", xmap(i), ymap(y))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            );
            for &(i, y, e) in &pts {
                let x = xmap(i);
                if e.is_finite() && e > 0.0 {
                    let lo_y = if self.log_y { (y - e).max(y * 0.1) } else { (y - e).max(0.0) };
                    let _ = writeln!(
                        svg,
                        r#"<line x1="{x:.2}" x2="{x:.2}" y1="{:.2}" y2="{:.2}" stroke="{color}"/>"#,
                        ymap(lo_y),
                        ymap(y + e)
                    );
                }
                let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#, ymap(y));
            }
            let ly = TOP + 14.0 + 20.0 * si as f64;
            let lx = LEFT + pw + 14.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                lx + 24.0,
                lx + 30.0,
                ly + 4.0,
                esc(&s.label)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}
