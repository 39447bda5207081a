//! Conversion between [`ConicProgram`] and the internal standard form
//! `min c'x  s.t.  Ax = b,  Gx + s = h,  s in R+^l x SOC_1 x ... x SOC_k`.

use super::{ConicProgram, ConicSolution, RotatedCone, SolveStatus};
use std::f64::consts::SQRT_2;

pub(crate) type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, Copy)]
enum EqOrigin {
    Equality(usize),
    FixedVar(usize),
    FixedRow(usize),
    /// `w_k = 0` forced by a cone whose `u` or `v` is identically zero.
    DegenerateCone(usize, usize),
}

#[derive(Debug, Clone, Copy)]
enum LpOrigin {
    Lower(usize),
    Upper(usize),
    RowLower(usize),
    RowUpper(usize),
    /// Nonnegativity of the free side of a degenerate cone (`true` = u side).
    DegenerateSide(usize, bool),
}

#[derive(Debug, Clone, Copy)]
enum SocOrigin {
    /// Full rotated cone mapped to `((u+v)/√2, (u-v)/√2, w)`.
    Rotated(usize),
    /// Both `u` and `v` constant: `(sqrt(2uv), w)`.
    FixedRadius(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct StandardForm {
    pub n: usize,
    pub c: Vec<f64>,
    pub a: Vec<SparseRow>,
    pub b: Vec<f64>,
    /// LP rows first, then the SOC blocks in order.
    pub g: Vec<SparseRow>,
    pub h: Vec<f64>,
    pub n_lp: usize,
    pub soc_dims: Vec<usize>,
    eq_origin: Vec<EqOrigin>,
    lp_origin: Vec<LpOrigin>,
    soc_origin: Vec<SocOrigin>,
}

/// Raw iterate in standard-form coordinates.
#[derive(Debug, Clone)]
pub(crate) struct RawSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub iterations: usize,
    pub residuals: super::Residuals,
}

fn neg_terms(terms: &[(usize, f64)]) -> SparseRow {
    terms
        .iter()
        .filter(|t| t.1 != 0.0)
        .map(|&(j, c)| (j, -c))
        .collect()
}

impl StandardForm {
    pub fn from_program(p: &ConicProgram) -> Self {
        let n = p.num_vars();
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut eq_origin = Vec::new();
        let mut g = Vec::new();
        let mut h = Vec::new();
        let mut lp_origin = Vec::new();

        for (i, e) in p.equalities.iter().enumerate() {
            a.push(e.terms.clone());
            b.push(e.rhs);
            eq_origin.push(EqOrigin::Equality(i));
        }
        for j in 0..n {
            let (lo, hi) = (p.lower[j], p.upper[j]);
            if lo == hi {
                a.push(vec![(j, 1.0)]);
                b.push(lo);
                eq_origin.push(EqOrigin::FixedVar(j));
                continue;
            }
            if lo.is_finite() {
                g.push(vec![(j, -1.0)]);
                h.push(-lo);
                lp_origin.push(LpOrigin::Lower(j));
            }
            if hi.is_finite() {
                g.push(vec![(j, 1.0)]);
                h.push(hi);
                lp_origin.push(LpOrigin::Upper(j));
            }
        }
        for (i, r) in p.rows.iter().enumerate() {
            if r.lo == r.hi {
                a.push(r.terms.clone());
                b.push(r.lo);
                eq_origin.push(EqOrigin::FixedRow(i));
                continue;
            }
            if r.lo.is_finite() {
                g.push(neg_terms(&r.terms));
                h.push(-r.lo);
                lp_origin.push(LpOrigin::RowLower(i));
            }
            if r.hi.is_finite() {
                g.push(r.terms.clone());
                h.push(r.hi);
                lp_origin.push(LpOrigin::RowUpper(i));
            }
        }

        // Degenerate cones contribute equalities and LP rows; collect SOC blocks separately.
        let mut soc_g = Vec::new();
        let mut soc_h = Vec::new();
        let mut soc_dims = Vec::new();
        let mut soc_origin = Vec::new();
        for (k, cone) in p.cones.iter().enumerate() {
            match classify(cone) {
                ConeKind::Degenerate { free_side } => {
                    for (idx, w) in cone.w.iter().enumerate() {
                        a.push(w.terms.clone());
                        b.push(-w.constant);
                        eq_origin.push(EqOrigin::DegenerateCone(k, idx));
                    }
                    if let Some(u_side) = free_side {
                        let e = if u_side { &cone.u } else { &cone.v };
                        g.push(neg_terms(&e.terms));
                        h.push(e.constant);
                        lp_origin.push(LpOrigin::DegenerateSide(k, u_side));
                    }
                }
                ConeKind::FixedRadius(radius) => {
                    soc_g.push(Vec::new());
                    soc_h.push(radius);
                    for w in &cone.w {
                        soc_g.push(neg_terms(&w.terms));
                        soc_h.push(w.constant);
                    }
                    soc_dims.push(1 + cone.w.len());
                    soc_origin.push(SocOrigin::FixedRadius(k));
                }
                ConeKind::Rotated => {
                    let mut sum = cone.u.terms.clone();
                    sum.extend(cone.v.terms.iter().copied());
                    let mut diff = cone.u.terms.clone();
                    diff.extend(cone.v.terms.iter().map(|&(j, c)| (j, -c)));
                    soc_g.push(neg_terms(&scale(&sum, 1.0 / SQRT_2)));
                    soc_h.push((cone.u.constant + cone.v.constant) / SQRT_2);
                    soc_g.push(neg_terms(&scale(&diff, 1.0 / SQRT_2)));
                    soc_h.push((cone.u.constant - cone.v.constant) / SQRT_2);
                    for w in &cone.w {
                        soc_g.push(neg_terms(&w.terms));
                        soc_h.push(w.constant);
                    }
                    soc_dims.push(2 + cone.w.len());
                    soc_origin.push(SocOrigin::Rotated(k));
                }
            }
        }
        let n_lp = g.len();
        g.extend(soc_g);
        h.extend(soc_h);

        Self {
            n,
            c: p.objective.clone(),
            a,
            b,
            g,
            h,
            n_lp,
            soc_dims,
            eq_origin,
            lp_origin,
            soc_origin,
        }
    }

    pub fn m(&self) -> usize {
        self.g.len()
    }

    pub fn p(&self) -> usize {
        self.a.len()
    }

    /// Maps a raw standard-form iterate back onto the program's constraints.
    pub fn recover(&self, prog: &ConicProgram, raw: RawSolution) -> ConicSolution {
        let n = prog.num_vars();
        let mut eq_dual = vec![0.0; prog.equalities.len()];
        let mut lower_dual = vec![0.0; n];
        let mut upper_dual = vec![0.0; n];
        let mut row_lower_dual = vec![0.0; prog.rows.len()];
        let mut row_upper_dual = vec![0.0; prog.rows.len()];
        let mut cone_dual: Vec<Vec<f64>> = prog
            .cones
            .iter()
            .map(|k| vec![0.0; 2 + k.w.len()])
            .collect();
        let mut degenerate_side = vec![0.0; prog.cones.len()];

        for (i, origin) in self.eq_origin.iter().enumerate() {
            let y = raw.y[i];
            match *origin {
                EqOrigin::Equality(e) => eq_dual[e] = y,
                // Fixed variable x_j = lo: split the multiplier into the bound duals.
                EqOrigin::FixedVar(j) => {
                    if y >= 0.0 {
                        upper_dual[j] = y;
                    } else {
                        lower_dual[j] = -y;
                    }
                }
                EqOrigin::FixedRow(r) => {
                    if y >= 0.0 {
                        row_upper_dual[r] = y;
                    } else {
                        row_lower_dual[r] = -y;
                    }
                }
                EqOrigin::DegenerateCone(k, idx) => cone_dual[k][2 + idx] = -y,
            }
        }
        for (i, origin) in self.lp_origin.iter().enumerate() {
            let z = raw.z[i];
            match *origin {
                LpOrigin::Lower(j) => lower_dual[j] = z,
                LpOrigin::Upper(j) => upper_dual[j] = z,
                LpOrigin::RowLower(r) => row_lower_dual[r] = z,
                LpOrigin::RowUpper(r) => row_upper_dual[r] = z,
                LpOrigin::DegenerateSide(k, u_side) => {
                    degenerate_side[k] = z;
                    cone_dual[k][if u_side { 0 } else { 1 }] = z;
                }
            }
        }
        let mut offset = self.n_lp;
        for (block, origin) in self.soc_origin.iter().enumerate() {
            let d = self.soc_dims[block];
            let z = &raw.z[offset..offset + d];
            match *origin {
                SocOrigin::Rotated(k) => {
                    cone_dual[k][0] = (z[0] + z[1]) / SQRT_2;
                    cone_dual[k][1] = (z[0] - z[1]) / SQRT_2;
                    cone_dual[k][2..].copy_from_slice(&z[2..]);
                }
                SocOrigin::FixedRadius(k) => {
                    let (u, v) = (prog.cones[k].u.constant, prog.cones[k].v.constant);
                    cone_dual[k][0] = z[0] * (v / (2.0 * u)).sqrt();
                    cone_dual[k][1] = z[0] * (u / (2.0 * v)).sqrt();
                    cone_dual[k][2..].copy_from_slice(&z[1..]);
                }
            }
            offset += d;
        }
        // Degenerate cones: choose the zero side's multiplier so the dual lies in the cone.
        for (k, cone) in prog.cones.iter().enumerate() {
            if let ConeKind::Degenerate { free_side } = classify(cone) {
                let wn2: f64 = cone_dual[k][2..].iter().map(|v| v * v).sum();
                let other = match free_side {
                    Some(_) => degenerate_side[k].max(1e-300),
                    None => 1.0,
                };
                let need = wn2 / (2.0 * other);
                match free_side {
                    Some(true) => cone_dual[k][1] = need,
                    Some(false) => cone_dual[k][0] = need,
                    None => {
                        cone_dual[k][0] = other;
                        cone_dual[k][1] = need;
                    }
                }
            }
        }

        let objective_value = match raw.status {
            SolveStatus::Optimal | SolveStatus::IterationLimit => prog.objective_value(&raw.x),
            SolveStatus::Infeasible => f64::INFINITY,
            SolveStatus::Unbounded => f64::NEG_INFINITY,
        };
        ConicSolution {
            status: raw.status,
            x: raw.x,
            eq_dual,
            lower_dual,
            upper_dual,
            row_lower_dual,
            row_upper_dual,
            cone_dual,
            objective_value,
            iterations: raw.iterations,
            residuals: raw.residuals,
        }
    }
}

fn scale(terms: &[(usize, f64)], s: f64) -> SparseRow {
    terms.iter().map(|&(j, c)| (j, c * s)).collect()
}

enum ConeKind {
    Rotated,
    FixedRadius(f64),
    /// `Some(true)`: u is free (v == 0), `Some(false)`: v is free, `None`: both constant.
    Degenerate {
        free_side: Option<bool>,
    },
}

fn classify(cone: &RotatedCone) -> ConeKind {
    let (uc, vc) = (cone.u.is_constant(), cone.v.is_constant());
    match (uc, vc) {
        (true, true) => {
            let (u, v) = (cone.u.constant, cone.v.constant);
            if u < 0.0 || v < 0.0 {
                ConeKind::Rotated
            } else if u * v > 0.0 {
                ConeKind::FixedRadius((2.0 * u * v).sqrt())
            } else {
                ConeKind::Degenerate { free_side: None }
            }
        }
        (true, false) if cone.u.constant == 0.0 => ConeKind::Degenerate {
            free_side: Some(false),
        },
        (false, true) if cone.v.constant == 0.0 => ConeKind::Degenerate {
            free_side: Some(true),
        },
        _ => ConeKind::Rotated,
    }
}
