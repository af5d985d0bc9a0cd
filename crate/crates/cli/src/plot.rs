//! Self-contained SVG plots: the log-log emergence curve and an orbit scatter.

use std::fmt::Write as _;

use emergence_core::dynsys::{PhaseBox, Trajectory};
use emergence_core::emergence::EmergenceCurve;

const W: f64 = 560.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn header(s: &mut String, title: &str) {
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    )
    .unwrap();
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Log-log plot of `N` against `1/ε` with decade gridlines and the fitted line.
pub fn curve_svg(curve: &EmergenceCurve, title: &str) -> String {
    let xs: Vec<f64> = curve.points.iter().map(|p| (1.0 / p.epsilon).log10()).collect();
    let ys: Vec<f64> = curve.points.iter().map(|p| (p.n_centers as f64).log10()).collect();
    let lo = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut f = Frame {
        x0: lo(&xs).floor(),
        x1: hi(&xs).ceil(),
        y0: lo(&ys).floor().min(0.0),
        y1: hi(&ys).ceil(),
    };
    if f.x1 <= f.x0 {
        f.x1 = f.x0 + 1.0;
    }
    if f.y1 <= f.y0 {
        f.y1 = f.y0 + 1.0;
    }

    let mut s = String::new();
    header(&mut s, title);
    for d in f.x0 as i32..=f.x1 as i32 {
        let x = f.px(d as f64);
        writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ccc"/>"##,
            f.py(f.y0),
            f.py(f.y1)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{d}</text>"#,
            H - BOTTOM + 18.0
        )
        .unwrap();
    }
    for d in f.y0 as i32..=f.y1 as i32 {
        let y = f.py(d as f64);
        writeln!(
            s,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ccc"/>"##,
            f.px(f.x0),
            f.px(f.x1)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#,
            LEFT - 6.0,
            y + 4.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">1/epsilon</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 18.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">N</text>"#,
        H / 2.0,
        H / 2.0
    )
    .unwrap();

    if let Some(fit) = &curve.fit {
        let line = |x: f64| (fit.intercept + fit.slope * x * std::f64::consts::LN_10) / std::f64::consts::LN_10;
        writeln!(
            s,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#d62728" stroke-dasharray="6 4"/>"##,
            f.px(f.x0),
            f.py(line(f.x0)),
            f.px(f.x1),
            f.py(line(f.x1))
        )
        .unwrap();
        writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" fill="#d62728">slope = {:.4}, r2 = {:.4}, class {}</text>"##,
            LEFT + 10.0,
            TOP + 16.0,
            fit.slope,
            fit.r2,
            escape(&curve.scaling.to_string())
        )
        .unwrap();
    }
    let path: Vec<String> = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
        .collect();
    writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4"/>"##,
        path.join(" ")
    )
    .unwrap();
    for (&x, &y) in xs.iter().zip(&ys) {
        writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="#1f77b4"/>"##,
            f.px(x),
            f.py(y)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Scatter of the non-escaped orbit points inside the phase box.
pub fn orbit_svg(traj: &Trajectory, b: &PhaseBox, title: &str) -> String {
    let two_d = b.dim() == 2;
    let f = Frame {
        x0: b.lo[0],
        x1: b.hi[0],
        y0: if two_d { b.lo[1] } else { 0.0 },
        y1: if two_d {
            b.hi[1]
        } else {
            traj.points.len().max(2) as f64 - 1.0
        },
    };
    let mut s = String::new();
    header(&mut s, title);
    writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    )
    .unwrap();
    for (t, p) in traj.points.iter().enumerate().filter(|(_, p)| !p.escaped) {
        let y = if two_d { p.coords[1] } else { t as f64 };
        writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="1.2"/>"#,
            f.px(p.coords[0]),
            f.py(y)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
