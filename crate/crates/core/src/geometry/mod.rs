//! Planar polygons in the P-Q plane: hulls, areas, containment and boolean
//! operations.
//!
//! Coordinates are used as given (kW / kVAr); every tolerance is relative to
//! the extent of the operands.

mod clip;

pub use clip::{boolean, BoolOp};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        self.sub(o).norm()
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point::new(x, y)
    }
}

/// Signed orientation of `c` relative to the directed line `a -> b`.
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    b.sub(a).cross(c.sub(a))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("clipping failed on degenerate input even after perturbation: {0}")]
    Degenerate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Degeneracy {
    Point,
    Segment,
}

/// A simple counterclockwise polygon, or a flagged point/segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    degenerate: Option<Degeneracy>,
}

/// Signed shoelace area of a closed vertex ring.
pub fn signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let o = ring[0];
    let mut s = 0.0;
    for i in 1..n - 1 {
        s += ring[i].sub(o).cross(ring[i + 1].sub(o));
    }
    0.5 * s
}

fn extent(points: &[Point]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let (mut x0, mut y0, mut x1, mut y1) = (
        f64::INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    );
    for p in points {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    (x1 - x0).hypot(y1 - y0)
}

/// Removes repeated and collinear vertices (tolerance relative to `scale`).
fn simplify(ring: &[Point], scale: f64) -> Vec<Point> {
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut pts: Vec<Point> = Vec::with_capacity(ring.len());
    for &p in ring {
        if pts.last().is_none_or(|q: &Point| q.dist(p) > tol) {
            pts.push(p);
        }
    }
    while pts.len() > 1 && pts[0].dist(*pts.last().unwrap()) <= tol {
        pts.pop();
    }
    let mut changed = true;
    while changed && pts.len() >= 3 {
        changed = false;
        let n = pts.len();
        for i in 0..n {
            let (a, b, c) = (pts[(i + n - 1) % n], pts[i], pts[(i + 1) % n]);
            let len = a.dist(c).max(tol);
            if orient(a, b, c).abs() <= tol * len && b.sub(a).dot(c.sub(b)) >= -tol * len {
                pts.remove(i);
                changed = true;
                break;
            }
        }
    }
    pts
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (d1, d2) = (orient(a, b, c), orient(a, b, d));
    let (d3, d4) = (orient(c, d, a), orient(c, d, b));
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

fn is_simple(ring: &[Point]) -> bool {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_cross(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

impl Polygon {
    /// Builds a polygon from a vertex ring of either orientation. Repeated and
    /// collinear vertices are dropped; a self-intersecting ring is replaced by
    /// the outer boundary of the region it winds around.
    pub fn new(vertices: impl IntoIterator<Item = Point>) -> Self {
        let raw: Vec<Point> = vertices.into_iter().collect();
        let scale = extent(&raw);
        let mut ring = simplify(&raw, scale);
        if ring.len() >= 3 && !is_simple(&ring) {
            let set = PolygonSet::from_rings(vec![ring.clone()]);
            if let Ok(fixed) = boolean(&set, &PolygonSet::default(), BoolOp::Union) {
                if let Some(outer) = fixed.largest() {
                    ring = outer.vertices;
                }
            }
        }
        if ring.len() < 3 || signed_area(&ring).abs() <= 1e-12 * scale * scale {
            return Self::degenerate_from(&raw);
        }
        if signed_area(&ring) < 0.0 {
            ring.reverse();
        }
        Self {
            vertices: ring,
            degenerate: None,
        }
    }

    fn degenerate_from(raw: &[Point]) -> Self {
        let Some(&first) = raw.first() else {
            return Self {
                vertices: Vec::new(),
                degenerate: Some(Degeneracy::Point),
            };
        };
        // Farthest pair along the dominant direction.
        let far = raw
            .iter()
            .copied()
            .max_by(|a, b| a.dist(first).total_cmp(&b.dist(first)))
            .unwrap();
        let other = raw
            .iter()
            .copied()
            .max_by(|a, b| a.dist(far).total_cmp(&b.dist(far)))
            .unwrap();
        if far.dist(other) <= 1e-12 * (far.norm() + other.norm()).max(f64::MIN_POSITIVE) {
            Self {
                vertices: vec![first],
                degenerate: Some(Degeneracy::Point),
            }
        } else {
            Self {
                vertices: vec![other, far],
                degenerate: Some(Degeneracy::Segment),
            }
        }
    }

    pub fn point(p: Point) -> Self {
        Self {
            vertices: vec![p],
            degenerate: Some(Degeneracy::Point),
        }
    }

    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new([
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn degeneracy(&self) -> Option<Degeneracy> {
        self.degenerate
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate.is_some()
    }

    pub fn area(&self) -> f64 {
        area(self)
    }

    /// Largest distance between two vertices.
    pub fn diameter(&self) -> f64 {
        let h = convex_hull(&self.vertices);
        let v = &h.vertices;
        let mut d = 0.0f64;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                d = d.max(v[i].dist(v[j]));
            }
        }
        d
    }

    pub fn centroid(&self) -> Point {
        let a = signed_area(&self.vertices);
        if self.is_degenerate() || a == 0.0 {
            let n = self.vertices.len().max(1) as f64;
            let s = self
                .vertices
                .iter()
                .fold(Point::default(), |s, p| Point::new(s.x + p.x, s.y + p.y));
            return Point::new(s.x / n, s.y / n);
        }
        let n = self.vertices.len();
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..n {
            let (p, q) = (self.vertices[i], self.vertices[(i + 1) % n]);
            let c = p.cross(q);
            cx += (p.x + q.x) * c;
            cy += (p.y + q.y) * c;
        }
        Point::new(cx / (6.0 * a), cy / (6.0 * a))
    }

    /// Point membership; boundary points (within `tol` times the extent) count as inside.
    pub fn contains_point(&self, p: Point, tol: f64) -> bool {
        if self.is_degenerate() {
            // A point or segment: membership is distance to its vertex chain.
            let v = &self.vertices;
            let d = match v.len() {
                0 => return false,
                1 => p.dist(v[0]),
                _ => v
                    .windows(2)
                    .map(|w| point_segment_distance(p, w[0], w[1]))
                    .fold(f64::INFINITY, f64::min),
            };
            return d <= tol * extent(v);
        }
        PolygonSet::from(self.clone()).contains_point(p, tol)
    }

    /// Convex outer approximation of this polygon's hull grown by `d`.
    pub fn inflate_convex(&self, d: f64) -> Polygon {
        // A 16-gon circumscribing a disc of radius d around every vertex.
        let r = d / (std::f64::consts::PI / 16.0).cos();
        let pts: Vec<Point> = self
            .vertices
            .iter()
            .flat_map(|v| {
                (0..16).map(move |k| {
                    let a = k as f64 * std::f64::consts::PI / 8.0;
                    Point::new(v.x + r * a.cos(), v.y + r * a.sin())
                })
            })
            .collect();
        convex_hull(&pts)
    }
}

/// Shoelace area; zero for degenerate polygons.
pub fn area(p: &Polygon) -> f64 {
    if p.is_degenerate() {
        0.0
    } else {
        signed_area(&p.vertices).abs()
    }
}

/// Convex hull by the monotone chain; collinear boundary points are dropped.
pub fn convex_hull(points: &[Point]) -> Polygon {
    let mut pts: Vec<Point> = points
        .iter()
        .copied()
        .filter(|p| p.x.is_finite() && p.y.is_finite())
        .collect();
    if pts.is_empty() {
        return Polygon {
            vertices: Vec::new(),
            degenerate: Some(Degeneracy::Point),
        };
    }
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Polygon::degenerate_from(&pts);
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        return Polygon::degenerate_from(&pts);
    }
    Polygon::new(hull)
}

/// A region bounded by rings: counterclockwise outer rings, clockwise holes,
/// with pairwise disjoint interiors.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PolygonSet {
    rings: Vec<Vec<Point>>,
}

impl From<Polygon> for PolygonSet {
    fn from(p: Polygon) -> Self {
        if p.is_degenerate() {
            Self::default()
        } else {
            Self {
                rings: vec![p.vertices],
            }
        }
    }
}

impl From<&Polygon> for PolygonSet {
    fn from(p: &Polygon) -> Self {
        p.clone().into()
    }
}

impl PolygonSet {
    /// Rings are taken as given; their orientation decides outer versus hole.
    pub fn from_rings(rings: Vec<Vec<Point>>) -> Self {
        Self {
            rings: rings.into_iter().filter(|r| r.len() >= 3).collect(),
        }
    }

    pub fn rings(&self) -> &[Vec<Point>] {
        &self.rings
    }

    pub fn is_empty(&self) -> bool {
        self.rings.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.rings
            .iter()
            .map(|r| signed_area(r))
            .sum::<f64>()
            .max(0.0)
    }

    /// Outer rings as polygons (holes ignored), largest first.
    pub fn outer_polygons(&self) -> Vec<Polygon> {
        let mut v: Vec<Polygon> = self
            .rings
            .iter()
            .filter(|r| signed_area(r) > 0.0)
            .map(|r| Polygon::new(r.iter().copied()))
            .filter(|p| !p.is_degenerate())
            .collect();
        v.sort_by(|a, b| b.area().total_cmp(&a.area()));
        v
    }

    /// The largest outer ring.
    pub fn largest(&self) -> Option<Polygon> {
        self.outer_polygons().into_iter().next()
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        self.rings.iter().flatten().copied()
    }

    pub fn extent(&self) -> f64 {
        extent(&self.points().collect::<Vec<_>>())
    }

    /// Nonzero winding number of the rings around `p`.
    pub fn winding(&self, p: Point) -> i32 {
        let mut w = 0;
        for ring in &self.rings {
            let n = ring.len();
            for i in 0..n {
                let (a, b) = (ring[i], ring[(i + 1) % n]);
                if a.y <= p.y {
                    if b.y > p.y && orient(a, b, p) > 0.0 {
                        w += 1;
                    }
                } else if b.y <= p.y && orient(a, b, p) < 0.0 {
                    w -= 1;
                }
            }
        }
        w
    }

    fn boundary_distance(&self, p: Point) -> f64 {
        let mut d = f64::INFINITY;
        for ring in &self.rings {
            let n = ring.len();
            for i in 0..n {
                d = d.min(point_segment_distance(p, ring[i], ring[(i + 1) % n]));
            }
        }
        d
    }

    /// Membership with boundary tolerance `tol` relative to the set's extent.
    pub fn contains_point(&self, p: Point, tol: f64) -> bool {
        self.winding(p) != 0 || self.boundary_distance(p) <= tol * self.extent()
    }
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(Point::new(a.x + t * ab.x, a.y + t * ab.y))
}

pub fn union(a: &PolygonSet, b: &PolygonSet) -> Result<PolygonSet, GeometryError> {
    boolean(a, b, BoolOp::Union)
}

pub fn intersect(a: &PolygonSet, b: &PolygonSet) -> Result<PolygonSet, GeometryError> {
    boolean(a, b, BoolOp::Intersection)
}

pub fn difference(a: &PolygonSet, b: &PolygonSet) -> Result<PolygonSet, GeometryError> {
    boolean(a, b, BoolOp::Difference)
}

pub fn symmetric_difference(a: &PolygonSet, b: &PolygonSet) -> Result<PolygonSet, GeometryError> {
    boolean(a, b, BoolOp::Xor)
}

/// True iff `area(inner \ outer) < tol * area(inner)`. A degenerate inner
/// polygon is contained when each of its points is.
pub fn contains(outer: &PolygonSet, inner: &Polygon, tol: f64) -> Result<bool, GeometryError> {
    if inner.is_degenerate() {
        return Ok(inner
            .vertices
            .iter()
            .all(|&p| outer.contains_point(p, tol.max(1e-9))));
    }
    Ok(uncovered_fraction(outer, inner)? < tol)
}

/// `area(inner \ outer) / area(inner)`; for a degenerate inner polygon, the
/// fraction of its vertices outside `outer`.
pub fn uncovered_fraction(outer: &PolygonSet, inner: &Polygon) -> Result<f64, GeometryError> {
    if inner.is_degenerate() {
        let out = inner
            .vertices
            .iter()
            .filter(|&&p| !outer.contains_point(p, 1e-9))
            .count();
        return Ok(out as f64 / inner.vertices.len().max(1) as f64);
    }
    Ok(difference(&inner.into(), outer)?.area() / inner.area())
}
