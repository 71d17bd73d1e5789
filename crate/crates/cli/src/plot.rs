//! Minimal deterministic SVG line charts.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub dashed: bool,
    /// Broken into separate polylines wherever a point is `None`.
    pub points: Vec<Option<(f64, f64)>>,
}

pub struct HLine<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub y: f64,
}

pub struct Chart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub series: Vec<Series<'a>>,
    pub hlines: Vec<HLine<'a>>,
}

/// Tick step of 1, 2 or 5 times a power of ten giving roughly `target` ticks.
fn nice_step(span: f64, target: f64) -> f64 {
    let raw = (span / target).max(1e-12);
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let m = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        return (lo - 1.0, hi + 1.0);
    }
    let step = nice_step(hi - lo, 5.0);
    ((lo / step).floor() * step, (hi / step).ceil() * step)
}

impl Chart<'_> {
    pub fn render(&self) -> String {
        let pts = self.series.iter().flat_map(|s| s.points.iter().flatten());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        for h in &self.hlines {
            y0 = y0.min(h.y);
            y1 = y1.max(h.y);
        }
        let (x0, x1) = padded_range(x0, x1);
        let (y0, y1) = padded_range(y0, y1);
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, esc(self.title));

        let xs = nice_step(x1 - x0, 8.0);
        let mut x = (x0 / xs).ceil() * xs;
        while x <= x1 + 1e-9 {
            let _ = writeln!(out, r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="#e0e0e0"/>"##, px(x), TOP, TOP + ph);
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, px(x), TOP + ph + 16.0, tick(x));
            x += xs;
        }
        let ys = nice_step(y1 - y0, 6.0);
        let mut y = (y0 / ys).ceil() * ys;
        while y <= y1 + 1e-9 {
            let _ = writeln!(out, r##"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="#e0e0e0"/>"##, LEFT, py(y), LEFT + pw);
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, py(y) + 4.0, tick(y));
            y += ys;
        }
        let _ = writeln!(out, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 10.0, esc(self.x_label));
        let _ = writeln!(
            out,
            r#"<text x="16" y="{0:.2}" text-anchor="middle" transform="rotate(-90 16 {0:.2})">{1}</text>"#,
            TOP + ph / 2.0,
            esc(self.y_label)
        );

        for h in &self.hlines {
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{2:.2}" x2="{:.2}" y2="{2:.2}" stroke="{3}" stroke-width="1.5" stroke-dasharray="6 4"><title>{4}</title></line>"#,
                LEFT,
                LEFT + pw,
                py(h.y),
                h.color,
                esc(h.label)
            );
        }
        for s in &self.series {
            let dash = if s.dashed { r#" stroke-dasharray="4 3""# } else { "" };
            for run in s.points.split(Option::is_none) {
                if run.is_empty() {
                    continue;
                }
                let coords: Vec<String> = run.iter().flatten().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
                let _ = writeln!(
                    out,
                    r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#,
                    coords.join(" "),
                    s.color
                );
            }
        }
        let legend: Vec<(&str, &str)> =
            self.series.iter().map(|s| (s.label, s.color)).chain(self.hlines.iter().map(|h| (h.label, h.color))).collect();
        for (i, (label, color)) in legend.iter().enumerate() {
            let ly = TOP + 14.0 + 14.0 * i as f64;
            let lx = LEFT + pw - 150.0;
            let _ = writeln!(out, r#"<line x1="{lx:.2}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="{color}" stroke-width="2"/>"#, ly - 4.0, lx + 18.0);
            let _ = writeln!(out, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 24.0, esc(label));
        }
        out.push_str("</svg>\n");
        out
    }
}

fn tick(v: f64) -> String {
    let r = (v * 1000.0).round() / 1000.0;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nice_steps() {
        assert_eq!(nice_step(10.0, 5.0), 2.0);
        assert_eq!(nice_step(100.0, 8.0), 20.0);
        assert_eq!(nice_step(3.0, 6.0), 0.5);
    }

    #[test]
    fn gaps_split_polylines_and_render_is_stable() {
        let chart = Chart {
            title: "t",
            x_label: "x",
            y_label: "y",
            series: vec![Series {
                label: "a",
                color: "blue",
                dashed: false,
                points: vec![Some((0.0, 0.0)), Some((1.0, 1.0)), None, Some((2.0, 0.0)), Some((3.0, 1.0))],
            }],
            hlines: vec![HLine { label: "limit", color: "magenta", y: 2.0 }],
        };
        let svg = chart.render();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(r#"stroke="magenta""#));
        assert_eq!(svg, chart.render());
    }
}
