//! Boolean operations on polygon sets by arrangement classification.
//!
//! All input edges are split at mutual intersections and snapped into a
//! shared vertex pool. Each distinct sub-segment is then classified by the
//! winding number of both operands just left and right of it: a ray cast
//! from the segment midpoint gives the left value, and edges coincident with
//! the segment account for the jump to the right. A segment is kept, oriented
//! with the result on its left, iff the result predicate differs between its
//! two sides. Kept edges are finally linked into rings, turning as far left
//! as possible at shared vertices so touching rings come out separately.

use super::{orient, signed_area, GeometryError, Point, PolygonSet};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoolOp {
    Union,
    Intersection,
    Difference,
    Xor,
}

impl BoolOp {
    fn keep(self, a: bool, b: bool) -> bool {
        match self {
            BoolOp::Union => a || b,
            BoolOp::Intersection => a && b,
            BoolOp::Difference => a && !b,
            BoolOp::Xor => a != b,
        }
    }
}

/// Applies `op` to two polygon sets (nonzero winding rule on each operand).
/// On a degenerate arrangement the inputs are perturbed by 1e-12 of their
/// extent and the operation retried once.
pub fn boolean(a: &PolygonSet, b: &PolygonSet, op: BoolOp) -> Result<PolygonSet, GeometryError> {
    match run(a, b, op) {
        Ok(r) => Ok(r),
        Err(first) => {
            let scale = a.extent().max(b.extent());
            let (pa, pb) = (perturb(a, scale, 0), perturb(b, scale, 1));
            run(&pa, &pb, op).map_err(|second| {
                GeometryError::Degenerate(format!("{first}; after perturbation: {second}"))
            })
        }
    }
}

fn perturb(s: &PolygonSet, scale: f64, salt: u64) -> PolygonSet {
    let eps = 1e-12 * scale;
    let mut k = salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut jitter = || {
        // splitmix64
        k = k.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = k;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z as f64 / u64::MAX as f64 - 0.5) * 2.0 * eps
    };
    PolygonSet::from_rings(
        s.rings()
            .iter()
            .map(|r| {
                r.iter()
                    .map(|p| Point::new(p.x + jitter(), p.y + jitter()))
                    .collect()
            })
            .collect(),
    )
}

#[derive(Clone, Copy)]
struct Edge {
    a: Point,
    b: Point,
    operand: usize,
}

struct Pool {
    points: Vec<Point>,
    cells: HashMap<(i64, i64), Vec<usize>>,
    tol: f64,
    cell: f64,
}

impl Pool {
    fn new(tol: f64) -> Self {
        Self {
            points: Vec::new(),
            cells: HashMap::new(),
            tol,
            cell: 2.0 * tol,
        }
    }

    fn key(&self, p: Point) -> (i64, i64) {
        (
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
        )
    }

    fn index(&mut self, p: Point) -> usize {
        let (cx, cy) = self.key(p);
        let mut best: Option<(f64, usize)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.cells.get(&(cx + dx, cy + dy)) {
                    for &i in ids {
                        let d = self.points[i].dist(p);
                        if d <= self.tol
                            && best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi))
                        {
                            best = Some((d, i));
                        }
                    }
                }
            }
        }
        if let Some((_, i)) = best {
            return i;
        }
        let i = self.points.len();
        self.points.push(p);
        self.cells.entry((cx, cy)).or_default().push(i);
        i
    }
}

fn near_segment(p: Point, a: Point, b: Point, tol: f64) -> bool {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return false;
    }
    let t = p.sub(a).dot(ab) / len2;
    if t <= 0.0 || t >= 1.0 {
        return false;
    }
    super::point_segment_distance(p, a, b) <= tol
}

/// Adds split points for the pair of edges `(e, f)`.
fn split_pair(e: &Edge, f: &Edge, tol: f64, se: &mut Vec<Point>, sf: &mut Vec<Point>) {
    let mut touched = false;
    for (p, a, b, into) in [
        (f.a, e.a, e.b, 0),
        (f.b, e.a, e.b, 0),
        (e.a, f.a, f.b, 1),
        (e.b, f.a, f.b, 1),
    ] {
        if near_segment(p, a, b, tol) {
            touched = true;
            if into == 0 {
                se.push(p);
            } else {
                sf.push(p);
            }
        }
    }
    if touched {
        return;
    }
    let (d1, d2) = (orient(e.a, e.b, f.a), orient(e.a, e.b, f.b));
    let (d3, d4) = (orient(f.a, f.b, e.a), orient(f.a, f.b, e.b));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        let t = d3 / (d3 - d4);
        let x = Point::new(e.a.x + t * (e.b.x - e.a.x), e.a.y + t * (e.b.y - e.a.y));
        se.push(x);
        sf.push(x);
    }
}

fn run(a: &PolygonSet, b: &PolygonSet, op: BoolOp) -> Result<PolygonSet, String> {
    let mut edges = Vec::new();
    for (operand, set) in [a, b].into_iter().enumerate() {
        for ring in set.rings() {
            let n = ring.len();
            for i in 0..n {
                let (p, q) = (ring[i], ring[(i + 1) % n]);
                if p != q {
                    edges.push(Edge {
                        a: p,
                        b: q,
                        operand,
                    });
                }
            }
        }
    }
    if edges.is_empty() {
        return Ok(PolygonSet::default());
    }
    let scale = a.extent().max(b.extent()).max(f64::MIN_POSITIVE);
    let tol = 1e-10 * scale;

    // Candidate pairs by a sweep over x-extents.
    let mut order: Vec<usize> = (0..edges.len()).collect();
    let lo = |e: &Edge| e.a.x.min(e.b.x);
    let hi = |e: &Edge| e.a.x.max(e.b.x);
    order.sort_by(|&i, &j| lo(&edges[i]).total_cmp(&lo(&edges[j])).then(i.cmp(&j)));
    let mut splits: Vec<Vec<Point>> = vec![Vec::new(); edges.len()];
    for (pos, &i) in order.iter().enumerate() {
        let ei = edges[i];
        let (ylo, yhi) = (ei.a.y.min(ei.b.y) - tol, ei.a.y.max(ei.b.y) + tol);
        for &j in &order[pos + 1..] {
            let ej = edges[j];
            if lo(&ej) > hi(&ei) + tol {
                break;
            }
            if ej.a.y.max(ej.b.y) < ylo || ej.a.y.min(ej.b.y) > yhi {
                continue;
            }
            let (mut si, mut sj) = (Vec::new(), Vec::new());
            split_pair(&ei, &ej, tol, &mut si, &mut sj);
            splits[i].extend(si);
            splits[j].extend(sj);
        }
    }

    // Sub-edges in pool indices, tagged with their operand.
    let mut pool = Pool::new(tol);
    let mut sub: Vec<(usize, usize, usize)> = Vec::new();
    for (k, e) in edges.iter().enumerate() {
        let dir = e.b.sub(e.a);
        let mut pts = std::mem::take(&mut splits[k]);
        pts.sort_by(|p, q| p.sub(e.a).dot(dir).total_cmp(&q.sub(e.a).dot(dir)));
        let mut prev = pool.index(e.a);
        for p in pts.into_iter().chain(std::iter::once(e.b)) {
            let idx = pool.index(p);
            if idx != prev {
                sub.push((prev, idx, e.operand));
                prev = idx;
            }
        }
    }
    let pts = &pool.points;

    // Undirected segments with per-operand signed multiplicity (+1 for u -> v, u < v).
    let mut segs: HashMap<(usize, usize), [i32; 2]> = HashMap::new();
    for &(u, v, o) in &sub {
        let (key, s) = if u < v { ((u, v), 1) } else { ((v, u), -1) };
        segs.entry(key).or_insert([0, 0])[o] += s;
    }
    let mut keys: Vec<(usize, usize)> = segs.keys().copied().collect();
    keys.sort_unstable();

    let mut kept: Vec<(usize, usize)> = Vec::new();
    for &(u, v) in &keys {
        let c = segs[&(u, v)];
        let (p, q) = (pts[u], pts[v]);
        let m = Point::new(0.5 * (p.x + q.x), 0.5 * (p.y + q.y));
        let d = q.sub(p);
        let n = Point::new(-d.y, d.x);
        let mut wl = [0i32; 2];
        for &(s, t, o) in &sub {
            let (s0, t0) = (s.min(t), s.max(t));
            if (s0, t0) == (u, v) {
                continue;
            }
            wl[o] += ray_crossing(m, n, d, pts[s], pts[t]);
        }
        let inside_left = [wl[0] != 0, wl[1] != 0];
        let inside_right = [wl[0] - c[0] != 0, wl[1] - c[1] != 0];
        let rl = op.keep(inside_left[0], inside_left[1]);
        let rr = op.keep(inside_right[0], inside_right[1]);
        match (rl, rr) {
            (true, false) => kept.push((u, v)),
            (false, true) => kept.push((v, u)),
            _ => {}
        }
    }
    assemble(pts, &kept, scale)
}

/// Signed crossing of the ray `m + t n` (t > 0) by the directed edge `s -> t`.
/// `d` spans the along-ray-normal axis; the half-open rule keeps vertex hits consistent.
fn ray_crossing(m: Point, n: Point, d: Point, s: Point, t: Point) -> i32 {
    // Coordinates: `a` along d (side of the ray line), `h` along n (distance up the ray).
    let (sa, ta) = (s.sub(m).dot(d), t.sub(m).dot(d));
    let upward = sa <= 0.0 && ta > 0.0;
    let downward = ta <= 0.0 && sa > 0.0;
    if !upward && !downward {
        return 0;
    }
    let (sh, th) = (s.sub(m).dot(n), t.sub(m).dot(n));
    let h = sh + (th - sh) * (sa / (sa - ta));
    if h <= 0.0 {
        return 0;
    }
    // An edge crossing from the d<0 side to the d>0 side passes the ray
    // right to left as seen from m looking along n; that raises the winding
    // of points on the ray.
    if downward {
        1
    } else {
        -1
    }
}

fn assemble(pts: &[Point], kept: &[(usize, usize)], scale: f64) -> Result<PolygonSet, String> {
    let mut out: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut indeg: HashMap<usize, i64> = HashMap::new();
    for (k, &(u, v)) in kept.iter().enumerate() {
        out.entry(u).or_default().push(k);
        *indeg.entry(v).or_default() += 1;
    }
    for (&v, list) in &out {
        if indeg.get(&v).copied().unwrap_or(0) != list.len() as i64 {
            return Err(format!("unbalanced vertex ({}, {})", pts[v].x, pts[v].y));
        }
    }
    if indeg.keys().any(|v| !out.contains_key(v)) {
        return Err("dangling edge".into());
    }
    let mut used = vec![false; kept.len()];
    let mut rings = Vec::new();
    for start in 0..kept.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let mut ring = vec![kept[start].0];
        let (mut prev, mut cur) = kept[start];
        while cur != kept[start].0 {
            ring.push(cur);
            let back = pts[prev].sub(pts[cur]);
            let next = out[&cur]
                .iter()
                .copied()
                .filter(|&k| !used[k])
                .max_by(|&i, &j| {
                    let ai = ccw_angle(back, pts[kept[i].1].sub(pts[cur]));
                    let aj = ccw_angle(back, pts[kept[j].1].sub(pts[cur]));
                    ai.total_cmp(&aj).then(j.cmp(&i))
                })
                .ok_or_else(|| "ring could not be closed".to_string())?;
            used[next] = true;
            prev = cur;
            cur = kept[next].1;
        }
        let ring: Vec<Point> = ring.into_iter().map(|i| pts[i]).collect();
        if signed_area(&ring).abs() > 1e-18 * scale * scale {
            rings.push(ring);
        }
    }
    Ok(PolygonSet::from_rings(rings))
}

/// Counterclockwise angle from `from` to `to`, in (0, 2 pi].
fn ccw_angle(from: Point, to: Point) -> f64 {
    let a = from.cross(to).atan2(from.dot(to));
    if a <= 0.0 {
        a + 2.0 * std::f64::consts::PI
    } else {
        a
    }
}
