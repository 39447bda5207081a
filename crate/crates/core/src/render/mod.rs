//! SVG output: network diagrams and segmentation charts.
//!
//! Every function here is pure, so identical inputs give byte-identical
//! documents.

use crate::distflow::OperatingPoint;
use crate::geometry::{Point, Polygon, PolygonSet};
use crate::grid::Network;
use crate::segmentation::{Segment, Segmentation, SegmentationMode};
use crate::tracer::{FlexArea, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Force-norm level at which the layout counts as converged.
pub const LAYOUT_TOLERANCE: f64 = 1e-3;
/// Lightness of the innermost and outermost segment shades, percent.
pub const LIGHTEST: f64 = 90.0;
pub const DARKEST: f64 = 25.0;
/// Number of voltage colour bins.
pub const VOLTAGE_BINS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutResult {
    /// Coordinates by bus index.
    pub positions: Vec<Point>,
    pub iterations: usize,
    /// Largest net force on any bus at the end.
    pub residual: f64,
    /// Natural edge length of the layout.
    pub spring_length: f64,
}

/// Admittance-based attraction weights, normalized to mean one.
fn edge_weights(net: &Network) -> Vec<(usize, usize, f64)> {
    let topo = net.topology();
    let mut edges: Vec<(usize, usize, f64)> = net
        .in_service_branches()
        .map(|k| {
            let (i, j) = topo.oriented[k].expect("in-service branches are oriented");
            let b = &net.branches[k];
            let z = b.r.hypot(b.x);
            (i, j, if z > 0.0 { 1.0 / z } else { f64::INFINITY })
        })
        .collect();
    let finite: Vec<f64> = edges
        .iter()
        .map(|e| e.2)
        .filter(|w| w.is_finite())
        .collect();
    let mean = if finite.is_empty() {
        1.0
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    for e in &mut edges {
        e.2 = if e.2.is_finite() {
            (e.2 / mean).clamp(0.2, 5.0)
        } else {
            5.0
        };
    }
    edges
}

fn forces(pos: &[Point], edges: &[(usize, usize, f64)], k: f64) -> Vec<Point> {
    let n = pos.len();
    let mut f = vec![Point::default(); n];
    for i in 0..n {
        for j in i + 1..n {
            let d = pos[i].sub(pos[j]);
            let dist = d.norm().max(1e-9);
            let m = k * k / dist / dist;
            f[i].x += d.x * m;
            f[i].y += d.y * m;
            f[j].x -= d.x * m;
            f[j].y -= d.y * m;
        }
    }
    for &(i, j, w) in edges {
        let d = pos[j].sub(pos[i]);
        let dist = d.norm();
        let m = w * dist / k;
        f[i].x += d.x * m;
        f[i].y += d.y * m;
        f[j].x -= d.x * m;
        f[j].y -= d.y * m;
    }
    f
}

fn energy(pos: &[Point], edges: &[(usize, usize, f64)], k: f64) -> f64 {
    let mut e = 0.0;
    for i in 0..pos.len() {
        for j in i + 1..pos.len() {
            e -= k * k * pos[i].dist(pos[j]).max(1e-9).ln();
        }
    }
    for &(i, j, w) in edges {
        e += w * pos[i].dist(pos[j]).powi(3) / (3.0 * k);
    }
    e
}

/// Spring-electric layout: all pairs repel with `k^2 / d`, branches attract
/// with `w d^2 / k` where `w` is the normalized admittance. Both forces derive
/// from one energy, which a gradient descent with backtracking minimizes.
pub fn layout_force(net: &Network, iterations: usize, seed: u64) -> LayoutResult {
    let n = net.buses.len();
    let k = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = (n as f64).sqrt() * k;
    let mut pos: Vec<Point> = (0..n)
        .map(|_| Point::new(rng.gen::<f64>() * side, rng.gen::<f64>() * side))
        .collect();
    let edges = edge_weights(net);
    let mut alpha = 0.1;
    let mut e = energy(&pos, &edges, k);
    let mut residual = f64::INFINITY;
    let mut done = 0;
    while done < iterations {
        let f = forces(&pos, &edges, k);
        residual = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if residual < LAYOUT_TOLERANCE {
            break;
        }
        done += 1;
        let moved = loop {
            let trial: Vec<Point> = pos
                .iter()
                .zip(&f)
                .map(|(p, v)| Point::new(p.x + alpha * v.x, p.y + alpha * v.y))
                .collect();
            let et = energy(&trial, &edges, k);
            if et < e {
                pos = trial;
                e = et;
                alpha *= 1.5;
                break true;
            }
            alpha *= 0.5;
            if alpha < 1e-14 {
                break false;
            }
        };
        if !moved {
            break;
        }
    }
    if done == iterations {
        residual = forces(&pos, &edges, k)
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max);
    }
    LayoutResult {
        positions: pos,
        iterations: done,
        residual,
        spring_length: k,
    }
}

/// Maps data coordinates to an SVG canvas with a margin; y grows upwards.
struct Frame {
    min: Point,
    max: Point,
    width: f64,
    height: f64,
    margin: f64,
}

impl Frame {
    fn fit(points: impl IntoIterator<Item = Point>, width: f64, height: f64, margin: f64) -> Self {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        if !min.x.is_finite() {
            min = Point::new(0.0, 0.0);
            max = Point::new(1.0, 1.0);
        }
        let pad = |lo: &mut f64, hi: &mut f64| {
            let span = *hi - *lo;
            let extra = if span > 0.0 {
                0.05 * span
            } else {
                lo.abs().max(1.0) * 0.05
            };
            *lo -= extra;
            *hi += extra;
        };
        pad(&mut min.x, &mut max.x);
        pad(&mut min.y, &mut max.y);
        Self {
            min,
            max,
            width,
            height,
            margin,
        }
    }

    fn x(&self, v: f64) -> f64 {
        self.margin
            + (v - self.min.x) / (self.max.x - self.min.x) * (self.width - 2.0 * self.margin)
    }

    fn y(&self, v: f64) -> f64 {
        self.height
            - self.margin
            - (v - self.min.y) / (self.max.y - self.min.y) * (self.height - 2.0 * self.margin)
    }

    fn map(&self, p: Point) -> (f64, f64) {
        (self.x(p.x), self.y(p.y))
    }
}

fn header(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="white"/>"#
    );
}

fn points_attr(frame: &Frame, pts: &[Point]) -> String {
    pts.iter()
        .map(|&p| {
            let (x, y) = frame.map(p);
            format!("{x:.2},{y:.2}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Voltage colour: bin 0 (at `v_min`) is the darkest.
pub fn voltage_color(v: f64, v_min: f64, v_max: f64) -> String {
    let t = if v_max > v_min {
        ((v - v_min) / (v_max - v_min)).clamp(0.0, 1.0)
    } else {
        0.5
    };
    let bin = ((t * VOLTAGE_BINS as f64) as usize).min(VOLTAGE_BINS - 1);
    let s = bin as f64 / (VOLTAGE_BINS - 1) as f64;
    format!("hsl({:.0},70%,{:.0}%)", 230.0 - 180.0 * s, 20.0 + 55.0 * s)
}

/// Network diagram: node radius follows demand, fill follows voltage.
pub fn render_network(net: &Network, layout: &LayoutResult, op: &OperatingPoint) -> String {
    const W: f64 = 800.0;
    const H: f64 = 640.0;
    const R_MIN: f64 = 3.0;
    const R_MAX: f64 = 14.0;
    let frame = Frame::fit(layout.positions.iter().copied(), W, H - 60.0, 30.0);
    let v_lo = net
        .buses
        .iter()
        .map(|b| b.v_min)
        .fold(f64::INFINITY, f64::min);
    let v_hi = net
        .buses
        .iter()
        .map(|b| b.v_max)
        .fold(f64::NEG_INFINITY, f64::max);
    let d_max = net
        .buses
        .iter()
        .map(|b| b.demand_p.hypot(b.demand_q))
        .fold(0.0, f64::max);
    let mut out = String::new();
    header(&mut out, W, H);
    let _ = writeln!(
        out,
        r##"<g id="branches" stroke="#555" stroke-width="1.5">"##
    );
    let topo = net.topology();
    for k in net.in_service_branches() {
        let (i, j) = topo.oriented[k].expect("oriented");
        let (x1, y1) = frame.map(layout.positions[i]);
        let (x2, y2) = frame.map(layout.positions[j]);
        let _ = writeln!(
            out,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}"/>"#
        );
    }
    out.push_str("</g>\n");
    let _ = writeln!(out, r#"<g id="buses" stroke="black" stroke-width="0.8">"#);
    for (i, b) in net.buses.iter().enumerate() {
        let (x, y) = frame.map(layout.positions[i]);
        let d = b.demand_p.hypot(b.demand_q);
        let r = if d_max > 0.0 {
            (R_MAX * d / d_max).max(R_MIN)
        } else {
            R_MIN
        };
        let v = op.voltages.get(i).copied().unwrap_or(1.0);
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{}"><title>bus {} {:.4} p.u.</title></circle>"#,
            voltage_color(v, v_lo, v_hi),
            b.id,
            v
        );
    }
    out.push_str("</g>\n");
    let _ = writeln!(
        out,
        r#"<g id="units" fill="none" stroke="crimson" stroke-width="2">"#
    );
    for u in &net.flex_units {
        let i = net.bus_index(u.bus).expect("validated");
        let (x, y) = frame.map(layout.positions[i]);
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="10" height="10"><title>unit {}</title></rect>"#,
            x + 6.0,
            y - 16.0,
            u.id
        );
    }
    out.push_str("</g>\n");
    let _ = writeln!(out, r#"<g id="legend">"#);
    for bin in 0..VOLTAGE_BINS {
        let lo = v_lo + (v_hi - v_lo) * bin as f64 / VOLTAGE_BINS as f64;
        let x = 30.0 + bin as f64 * 70.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.0}" y="{:.0}" width="14" height="14" fill="{}" stroke="black" stroke-width="0.5"/><text x="{:.0}" y="{:.0}">{lo:.3}</text>"#,
            H - 40.0,
            voltage_color(lo, v_lo, v_hi),
            x + 18.0,
            H - 28.0
        );
    }
    let _ = writeln!(
        out,
        r#"<rect x="{:.0}" y="{:.0}" width="10" height="10" fill="none" stroke="crimson" stroke-width="2"/><text x="{:.0}" y="{:.0}">flexible unit</text>"#,
        30.0,
        H - 18.0,
        46.0,
        H - 9.0
    );
    out.push_str("</g>\n</svg>\n");
    out
}

/// `css` grey at a lightness in percent.
fn grey(lightness: f64) -> String {
    format!("hsl(0,0%,{lightness:.1}%)")
}

/// Shade position in `[0, 1]` (0 lightest) for each segment.
fn shade_positions(seg: &Segmentation) -> Vec<f64> {
    let n = seg.segments.len();
    match seg.mode {
        SegmentationMode::ByCount => {
            let top = seg
                .segments
                .iter()
                .map(|s| s.cardinality)
                .max()
                .unwrap_or(0)
                .max(1) as f64;
            seg.segments
                .iter()
                .map(|s| s.cardinality as f64 / top)
                .collect()
        }
        SegmentationMode::Probabilistic => {
            let hi = seg
                .segments
                .iter()
                .map(|s| s.probability)
                .fold(f64::NEG_INFINITY, f64::max);
            let lo = seg
                .segments
                .iter()
                .map(|s| s.probability)
                .fold(f64::INFINITY, f64::min);
            if n < 2 || hi <= lo {
                return vec![0.0; n];
            }
            seg.segments
                .iter()
                .map(|s| (hi - s.probability) / (hi - lo))
                .collect()
        }
    }
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn label(seg: &Segmentation, s: &Segment) -> String {
    match seg.mode {
        SegmentationMode::ByCount => format!(
            "{} unit{}",
            s.cardinality,
            if s.cardinality == 1 { "" } else { "s" }
        ),
        SegmentationMode::Probabilistic => {
            let ids: Vec<String> = s.subset.iter().map(|i| i.to_string()).collect();
            format!("{{{}}} p={:.3}", ids.join(","), s.probability)
        }
    }
}

/// Segmentation chart in kW / kVAr with a cross at the reference point.
pub fn render_segmentation(seg: &Segmentation, reference: (f64, f64)) -> String {
    let shades = shade_positions(seg);
    let layers: Vec<Layer> = seg
        .segments
        .iter()
        .zip(&shades)
        .map(|(s, &shade)| Layer {
            polygon: &s.polygon,
            label: label(seg, s),
            shade,
        })
        .collect();
    let envelope = seg
        .envelope
        .as_ref()
        .map(|e| (e, seg.threshold.unwrap_or(0.0)));
    chart(&layers, envelope, &[], reference)
}

/// Chart of one traced area, optionally with sampled points.
pub fn render_area(area: &FlexArea, samples: &[Sample]) -> String {
    let polygon = area.polygon();
    let layers = [Layer {
        polygon: &polygon,
        label: format!("{} k={}", area.method.as_str(), area.k),
        shade: 0.5,
    }];
    let dots: Vec<Point> = samples
        .iter()
        .filter(|s| s.feasible)
        .map(|s| Point::new(s.p, s.q))
        .collect();
    chart(&layers, None, &dots, area.reference_point)
}

struct Layer<'a> {
    polygon: &'a Polygon,
    label: String,
    /// 0 is the lightest shade, 1 the darkest.
    shade: f64,
}

fn chart(
    layers: &[Layer],
    envelope: Option<(&PolygonSet, f64)>,
    dots: &[Point],
    reference: (f64, f64),
) -> String {
    const W: f64 = 820.0;
    const H: f64 = 620.0;
    const PLOT_W: f64 = 620.0;
    let refp = Point::new(reference.0, reference.1);
    let all = layers
        .iter()
        .flat_map(|l| l.polygon.vertices().iter().copied())
        .chain(
            envelope
                .iter()
                .flat_map(|e| e.0.points().collect::<Vec<_>>()),
        )
        .chain(dots.iter().copied())
        .chain(std::iter::once(refp));
    let frame = Frame::fit(all, PLOT_W, H, 60.0);
    let mut out = String::new();
    header(&mut out, W, H);

    // Axes with ticks.
    let _ = writeln!(out, r#"<g id="axes" stroke="black" stroke-width="1">"#);
    let (x0, x1) = (frame.x(frame.min.x), frame.x(frame.max.x));
    let (y0, y1) = (frame.y(frame.min.y), frame.y(frame.max.y));
    let _ = writeln!(
        out,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/>"#
    );
    let _ = writeln!(
        out,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/>"#
    );
    let step = nice_step(frame.max.x - frame.min.x);
    let mut v = (frame.min.x / step).ceil() * step;
    while v <= frame.max.x {
        let x = frame.x(v);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}"/><text x="{x:.2}" y="{:.2}" text-anchor="middle" stroke="none">{v:.0}</text>"#,
            y0 + 5.0,
            y0 + 18.0
        );
        v += step;
    }
    let step = nice_step(frame.max.y - frame.min.y);
    let mut v = (frame.min.y / step).ceil() * step;
    while v <= frame.max.y {
        let y = frame.y(v);
        let _ = writeln!(
            out,
            r#"<line x1="{x0:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}"/><text x="{:.2}" y="{:.2}" text-anchor="end" stroke="none">{v:.0}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0
        );
        v += step;
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" stroke="none">P (kW)</text>"#,
        (x0 + x1) / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.2}" text-anchor="middle" stroke="none" transform="rotate(-90 14 {:.2})">Q (kVAr)</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    out.push_str("</g>\n");

    // Outermost first so inner segments stay visible.
    let mut order: Vec<usize> = (0..layers.len()).collect();
    order.sort_by(|&a, &b| layers[b].shade.total_cmp(&layers[a].shade).then(b.cmp(&a)));
    let _ = writeln!(
        out,
        r#"<g id="segments" stroke="black" stroke-width="0.6">"#
    );
    for &i in &order {
        let l = &layers[i];
        draw_polygon(
            &mut out,
            &frame,
            l.polygon,
            &grey(shade_lightness(l.shade)),
            &l.label,
        );
    }
    out.push_str("</g>\n");

    if !dots.is_empty() {
        let _ = writeln!(out, r#"<g id="samples" fill="steelblue">"#);
        for &d in dots {
            let (x, y) = frame.map(d);
            let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.5"/>"#);
        }
        out.push_str("</g>\n");
    }

    if let Some((env, _)) = envelope {
        let _ = writeln!(
            out,
            r#"<g id="envelope" fill="none" stroke="black" stroke-width="1.6" stroke-dasharray="6 4">"#
        );
        for ring in env.rings() {
            let _ = writeln!(out, r#"<polygon points="{}"/>"#, points_attr(&frame, ring));
        }
        out.push_str("</g>\n");
    }

    let (cx, cy) = frame.map(refp);
    let _ = writeln!(
        out,
        r#"<g id="reference" stroke="black" stroke-width="2"><line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/></g>"#,
        cx - 6.0,
        cy - 6.0,
        cx + 6.0,
        cy + 6.0,
        cx - 6.0,
        cy + 6.0,
        cx + 6.0,
        cy - 6.0
    );

    let _ = writeln!(out, r#"<g id="legend">"#);
    let mut legend: Vec<usize> = (0..layers.len()).collect();
    legend.sort_by(|&a, &b| layers[a].shade.total_cmp(&layers[b].shade).then(a.cmp(&b)));
    for (row, &i) in legend.iter().take(24).enumerate() {
        let y = 60.0 + row as f64 * 20.0;
        let fill = grey(shade_lightness(layers[i].shade));
        let _ = writeln!(
            out,
            r#"<rect x="{:.0}" y="{y:.0}" width="14" height="14" fill="{fill}" stroke="black" stroke-width="0.5"/><text x="{:.0}" y="{:.0}">{}</text>"#,
            PLOT_W + 10.0,
            PLOT_W + 30.0,
            y + 11.0,
            layers[i].label
        );
    }
    if let Some((_, threshold)) = envelope {
        let y = 60.0 + legend.len().min(24) as f64 * 20.0;
        let _ = writeln!(
            out,
            r#"<line x1="{:.0}" y1="{:.0}" x2="{:.0}" y2="{:.0}" stroke="black" stroke-width="1.6" stroke-dasharray="6 4"/><text x="{:.0}" y="{:.0}">p &gt;= {:.2}</text>"#,
            PLOT_W + 10.0,
            y + 7.0,
            PLOT_W + 24.0,
            y + 7.0,
            PLOT_W + 30.0,
            y + 11.0,
            threshold
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}

fn shade_lightness(shade: f64) -> f64 {
    LIGHTEST - (LIGHTEST - DARKEST) * shade
}

fn draw_polygon(out: &mut String, frame: &Frame, poly: &Polygon, fill: &str, title: &str) {
    if poly.is_degenerate() {
        let (x, y) = frame.map(poly.vertices().first().copied().unwrap_or_default());
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{fill}"><title>{title}</title></circle>"#
        );
        return;
    }
    let _ = writeln!(
        out,
        r#"<polygon points="{}" fill="{fill}"><title>{title}</title></polygon>"#,
        points_attr(frame, poly.vertices())
    );
}

#[cfg(test)]
mod tests;
