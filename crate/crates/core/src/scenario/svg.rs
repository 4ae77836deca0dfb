use std::fmt::Write;

use nalgebra::Matrix2;

use super::Scenario;
use crate::dynamics::TrajectoryLog;
use crate::error::{Error, Result};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const CANVAS: f64 = 760.0;
const PAD: f64 = 20.0;
/// Points kept per trajectory; longer logs are thinned uniformly.
const MAX_POINTS: usize = 4000;

/// Top-down drawing of one run projected onto `axes`.
pub fn render_svg(log: &TrajectoryLog, scenario: &Scenario, axes: (usize, usize)) -> Result<String> {
    render_overlay(&[("run".to_string(), log)], scenario, axes)
}

/// One drawing with several runs over the same scenario.
///
/// Ellipsoids are drawn as their slice through the center in the chosen
/// coordinate plane, which is exact for axis-aligned shapes.
pub fn render_overlay(runs: &[(String, &TrajectoryLog)], scenario: &Scenario, axes: (usize, usize)) -> Result<String> {
    let n = scenario.dim();
    let (a, b) = axes;
    if n < 2 {
        return Err(Error::Input(format!(
            "plotting needs at least 2 dimensions, scenario has {n}"
        )));
    }
    if a >= n || b >= n || a == b {
        return Err(Error::Input(format!(
            "invalid projection axes ({a}, {b}) for dimension {n}"
        )));
    }
    for (label, log) in runs {
        if log.n != n {
            return Err(Error::Input(format!(
                "trajectory '{label}' has dimension {}, scenario has {n}",
                log.n
            )));
        }
    }

    let ellipses: Vec<Ellipse> = scenario
        .plan
        .ellipsoids()
        .iter()
        .map(|e| {
            let s = e.shape();
            Ellipse::from_shape(
                [e.center()[a], e.center()[b]],
                Matrix2::new(s[(a, a)], s[(a, b)], s[(b, a)], s[(b, b)]),
            )
        })
        .collect();

    let mut bounds = Bounds::default();
    for el in &ellipses {
        bounds.add(el.center[0] - el.extent[0], el.center[1] - el.extent[1]);
        bounds.add(el.center[0] + el.extent[0], el.center[1] + el.extent[1]);
    }
    for o in &scenario.obstacles {
        bounds.add(o.min[a], o.min[b]);
        bounds.add(o.max[a], o.max[b]);
    }
    for w in scenario.plan.waypoints() {
        bounds.add(w[a], w[b]);
    }
    for (_, log) in runs {
        for r in &log.records {
            bounds.add(r.p[a], r.p[b]);
        }
    }
    let view = View::new(&bounds);

    let mut out = String::new();
    let (w, h) = view.size();
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    )
    .unwrap();
    writeln!(out, "<title>{} (axes {a}, {b})</title>", escape(&scenario.name)).unwrap();
    writeln!(
        out,
        r#"<rect x="0" y="0" width="{w:.2}" height="{h:.2}" fill="white"/>"#
    )
    .unwrap();

    writeln!(
        out,
        r##"<g class="safe-sets" fill="#d9d9d9" fill-opacity="0.35" stroke="#7f7f7f" stroke-width="1">"##
    )
    .unwrap();
    for (i, el) in ellipses.iter().enumerate() {
        let (cx, cy) = view.map(el.center[0], el.center[1]);
        writeln!(
            out,
            r#"<ellipse id="C{i}" cx="{cx:.3}" cy="{cy:.3}" rx="{:.3}" ry="{:.3}" transform="rotate({:.6} {cx:.3} {cy:.3})"/>"#,
            el.radii[0] * view.scale,
            el.radii[1] * view.scale,
            -el.angle.to_degrees()
        )
        .unwrap();
    }
    writeln!(out, "</g>").unwrap();

    writeln!(out, r##"<g class="obstacles" fill="#404040" fill-opacity="0.8">"##).unwrap();
    for o in &scenario.obstacles {
        let (x0, y0) = view.map(o.min[a], o.max[b]);
        let (x1, y1) = view.map(o.max[a], o.min[b]);
        writeln!(
            out,
            r#"<rect x="{x0:.3}" y="{y0:.3}" width="{:.3}" height="{:.3}"/>"#,
            x1 - x0,
            y1 - y0
        )
        .unwrap();
    }
    writeln!(out, "</g>").unwrap();

    for (label, log) in runs {
        writeln!(
            out,
            r#"<g class="trajectory" data-run="{}" fill="none" stroke-width="1.5">"#,
            escape(label)
        )
        .unwrap();
        for (segment, pts) in segment_polylines(log, (a, b)) {
            let mut d = String::new();
            for (k, (x, y)) in pts.iter().enumerate() {
                let (px, py) = view.map(*x, *y);
                write!(d, "{}{px:.2} {py:.2}", if k == 0 { "M" } else { " L" }).unwrap();
            }
            writeln!(
                out,
                r#"<path data-segment="{segment}" stroke="{}" d="{d}"/>"#,
                PALETTE[segment % PALETTE.len()]
            )
            .unwrap();
        }
        writeln!(out, "</g>").unwrap();
    }

    writeln!(
        out,
        r#"<g class="waypoints" fill="black" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    for (k, wp) in scenario.plan.waypoints().iter().enumerate() {
        let (x, y) = view.map(wp[a], wp[b]);
        writeln!(out, r#"<circle cx="{x:.3}" cy="{y:.3}" r="4"/>"#).unwrap();
        writeln!(out, r#"<text x="{:.3}" y="{:.3}">x{k}</text>"#, x + 6.0, y - 6.0).unwrap();
    }
    writeln!(out, "</g>").unwrap();
    writeln!(out, "</svg>").unwrap();
    Ok(out)
}

struct Ellipse {
    center: [f64; 2],
    radii: [f64; 2],
    /// Direction of the first semi-axis, radians from the first plot axis.
    angle: f64,
    /// Half-widths of the bounding box.
    extent: [f64; 2],
}

impl Ellipse {
    fn from_shape(center: [f64; 2], m: Matrix2<f64>) -> Self {
        let eig = m.symmetric_eigen();
        let axis = eig.eigenvectors.column(0);
        let inv = m.try_inverse().unwrap_or_else(Matrix2::zeros);
        Self {
            center,
            radii: [1.0 / eig.eigenvalues[0].sqrt(), 1.0 / eig.eigenvalues[1].sqrt()],
            angle: axis[1].atan2(axis[0]),
            extent: [inv[(0, 0)].max(0.0).sqrt(), inv[(1, 1)].max(0.0).sqrt()],
        }
    }
}

#[derive(Default)]
struct Bounds {
    lo: Option<[f64; 2]>,
    hi: [f64; 2],
}

impl Bounds {
    fn add(&mut self, x: f64, y: f64) {
        if !(x.is_finite() && y.is_finite()) {
            return;
        }
        match &mut self.lo {
            None => {
                self.lo = Some([x, y]);
                self.hi = [x, y];
            }
            Some(lo) => {
                lo[0] = lo[0].min(x);
                lo[1] = lo[1].min(y);
                self.hi[0] = self.hi[0].max(x);
                self.hi[1] = self.hi[1].max(y);
            }
        }
    }
}

struct View {
    x0: f64,
    y1: f64,
    scale: f64,
    span: [f64; 2],
}

impl View {
    fn new(b: &Bounds) -> Self {
        let lo = b.lo.unwrap_or([0.0, 0.0]);
        let span = [(b.hi[0] - lo[0]).max(1e-9), (b.hi[1] - lo[1]).max(1e-9)];
        Self {
            x0: lo[0],
            y1: b.hi[1],
            scale: CANVAS / span[0].max(span[1]),
            span,
        }
    }

    /// World to canvas, with the second axis pointing up.
    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        (PAD + (x - self.x0) * self.scale, PAD + (self.y1 - y) * self.scale)
    }

    fn size(&self) -> (f64, f64) {
        (
            2.0 * PAD + self.span[0] * self.scale,
            2.0 * PAD + self.span[1] * self.scale,
        )
    }
}

/// Projected points per segment. A switch record closes the previous
/// polyline and opens the next so the drawing stays connected.
fn segment_polylines(log: &TrajectoryLog, (a, b): (usize, usize)) -> Vec<(usize, Vec<(f64, f64)>)> {
    let stride = log.len().div_ceil(MAX_POINTS).max(1);
    let mut out: Vec<(usize, Vec<(f64, f64)>)> = vec![];
    for (k, r) in log.records.iter().enumerate() {
        let pt = (r.p[a], r.p[b]);
        let boundary = r.switched || k + 1 == log.len() || out.last().is_none_or(|(s, _)| *s != r.segment);
        if r.switched {
            if let Some((_, pts)) = out.last_mut() {
                pts.push(pt);
            }
        }
        match out.last_mut() {
            Some((s, pts)) if *s == r.segment => {
                if boundary || k % stride == 0 {
                    pts.push(pt);
                }
            }
            _ => out.push((r.segment, vec![pt])),
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
