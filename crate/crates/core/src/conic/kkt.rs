//! Newton system of the interior-point method.
//!
//! The full system `[[0, A', G'], [A, 0, 0], [G, 0, -W^2]]` is reduced by
//! eliminating `dz`, factored as a quasi-definite matrix, and the reduced
//! solutions are polished by iterative refinement against the full system.

use super::cones::{ConeLayout, Scaling};
use super::ldl::SparseLdl;
use super::standard::{SparseRow, StandardForm};
use std::collections::BTreeMap;

const STATIC_REG: f64 = 1e-9;
const DYN_EPS: f64 = 1e-13;
const DYN_DELTA: f64 = 7e-8;
const REFINE_STEPS: usize = 8;

/// One scaled block of `G`: an LP row or an SOC block.
#[derive(Debug, Clone)]
struct Block {
    /// Offset into the cone vector and number of rows.
    offset: usize,
    dim: usize,
    /// Distinct variables touched by the block.
    vars: Vec<usize>,
    /// Dense `dim x vars.len()` coefficients, row-major.
    coef: Vec<f64>,
    /// Slot of each `(a, b)` pair with `a <= b` in `vars`.
    slots: Vec<usize>,
    soc_index: Option<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct Kkt {
    n: usize,
    p: usize,
    m: usize,
    pub a: Vec<SparseRow>,
    pub g: Vec<SparseRow>,
    pub layout: ConeLayout,
    ldl: SparseLdl,
    diag_slots: Vec<usize>,
    a_slots: Vec<Vec<usize>>,
    blocks: Vec<Block>,
}

fn merge(row: &[(usize, f64)]) -> SparseRow {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for &(j, c) in row {
        *acc.entry(j).or_insert(0.0) += c;
    }
    acc.into_iter().filter(|&(_, c)| c != 0.0).collect()
}

impl Kkt {
    pub fn new(sf: &StandardForm) -> Self {
        let (n, p, m) = (sf.n, sf.p(), sf.m());
        let a: Vec<SparseRow> = sf.a.iter().map(|r| merge(r)).collect();
        let g: Vec<SparseRow> = sf.g.iter().map(|r| merge(r)).collect();
        let layout = ConeLayout::new(sf.n_lp, &sf.soc_dims);

        let mut entries: Vec<(usize, usize)> = (0..n + p).map(|i| (i, i)).collect();
        let mut a_pos = Vec::with_capacity(p);
        for (i, row) in a.iter().enumerate() {
            let mut pos = Vec::with_capacity(row.len());
            for &(j, _) in row {
                pos.push(entries.len());
                entries.push((j, n + i));
            }
            a_pos.push(pos);
        }

        let mut raw_blocks: Vec<(usize, usize, Option<usize>)> =
            (0..sf.n_lp).map(|i| (i, 1, None)).collect();
        for (k, &(o, d)) in layout.soc.iter().enumerate() {
            raw_blocks.push((o, d, Some(k)));
        }
        let mut blocks = Vec::with_capacity(raw_blocks.len());
        let mut block_pos = Vec::with_capacity(raw_blocks.len());
        for (offset, dim, soc_index) in raw_blocks {
            let mut vars: Vec<usize> = g[offset..offset + dim]
                .iter()
                .flat_map(|r| r.iter().map(|t| t.0))
                .collect();
            vars.sort_unstable();
            vars.dedup();
            let nv = vars.len();
            let mut coef = vec![0.0; dim * nv];
            for (r, row) in g[offset..offset + dim].iter().enumerate() {
                for &(j, c) in row {
                    let col = vars.binary_search(&j).expect("variable collected above");
                    coef[r * nv + col] = c;
                }
            }
            let mut pos = Vec::with_capacity(nv * (nv + 1) / 2);
            for ia in 0..nv {
                for ib in ia..nv {
                    pos.push(entries.len());
                    entries.push((vars[ia], vars[ib]));
                }
            }
            block_pos.push(pos);
            blocks.push(Block {
                offset,
                dim,
                vars,
                coef,
                slots: Vec::new(),
                soc_index,
            });
        }

        let signs: Vec<f64> = (0..n + p).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
        let (ldl, slots) = SparseLdl::new(n + p, &entries, &signs);
        let diag_slots = slots[..n + p].to_vec();
        let a_slots = a_pos
            .iter()
            .map(|pos| pos.iter().map(|&e| slots[e]).collect())
            .collect();
        for (b, pos) in blocks.iter_mut().zip(block_pos) {
            b.slots = pos.iter().map(|&e| slots[e]).collect();
        }
        Self {
            n,
            p,
            m,
            a,
            g,
            layout,
            ldl,
            diag_slots,
            a_slots,
            blocks,
        }
    }

    /// Assembles and factors the reduced matrix for scaling `w`.
    pub fn factor(&mut self, w: &Scaling) {
        let n = self.n;
        let vals = self.ldl.values_mut();
        vals.iter_mut().for_each(|v| *v = 0.0);
        for (i, &s) in self.diag_slots.iter().enumerate() {
            vals[s] += if i < n { STATIC_REG } else { -STATIC_REG };
        }
        for (row, slots) in self.a.iter().zip(&self.a_slots) {
            for (&(_, c), &s) in row.iter().zip(slots) {
                vals[s] += c;
            }
        }
        for b in &self.blocks {
            let nv = b.vars.len();
            if nv == 0 {
                continue;
            }
            // H = C' M C with M = W^{-2} restricted to the block.
            let h: Vec<f64> = match b.soc_index {
                None => {
                    let wi = 1.0 / (w.lp[b.offset] * w.lp[b.offset]);
                    let mut h = Vec::with_capacity(nv * (nv + 1) / 2);
                    for ia in 0..nv {
                        for ib in ia..nv {
                            h.push(wi * b.coef[ia] * b.coef[ib]);
                        }
                    }
                    h
                }
                Some(k) => {
                    let d = b.dim;
                    let mmat = w.soc_w_inv_sq(k, d);
                    // MC (d x nv)
                    let mut mc = vec![0.0; d * nv];
                    for r in 0..d {
                        for t in 0..d {
                            let mrt = mmat[r * d + t];
                            if mrt == 0.0 {
                                continue;
                            }
                            for c in 0..nv {
                                mc[r * nv + c] += mrt * b.coef[t * nv + c];
                            }
                        }
                    }
                    let mut h = Vec::with_capacity(nv * (nv + 1) / 2);
                    for ia in 0..nv {
                        for ib in ia..nv {
                            let mut s = 0.0;
                            for r in 0..d {
                                s += b.coef[r * nv + ia] * mc[r * nv + ib];
                            }
                            h.push(s);
                        }
                    }
                    h
                }
            };
            for (&s, v) in b.slots.iter().zip(h) {
                vals[s] += v;
            }
        }
        self.ldl.factor(DYN_EPS, DYN_DELTA);
    }

    /// Solves `[[0, A', G'], [A, 0, 0], [G, 0, -W^2]] (dx, dy, dz) = (r1, r2, r3)`.
    pub fn solve(
        &self,
        w: &Scaling,
        r1: &[f64],
        r2: &[f64],
        r3: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (mut dx, mut dy, mut dz) = self.reduced_solve(w, r1, r2, r3);
        let rnorm = inf_norm(r1).max(inf_norm(r2)).max(inf_norm(r3)).max(1.0);
        let mut last = f64::INFINITY;
        for _ in 0..REFINE_STEPS {
            let (e1, e2, e3) = self.residual(w, r1, r2, r3, &dx, &dy, &dz);
            let err = inf_norm(&e1).max(inf_norm(&e2)).max(inf_norm(&e3));
            if err <= 1e-14 * rnorm || err >= 0.5 * last {
                break;
            }
            last = err;
            let (cx, cy, cz) = self.reduced_solve(w, &e1, &e2, &e3);
            add(&mut dx, &cx);
            add(&mut dy, &cy);
            add(&mut dz, &cz);
        }
        (dx, dy, dz)
    }

    fn reduced_solve(
        &self,
        w: &Scaling,
        r1: &[f64],
        r2: &[f64],
        r3: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (n, m) = (self.n, self.m);
        let mut t = vec![0.0; m];
        let mut w2r3 = vec![0.0; m];
        w.mul_w_inv(&self.layout, r3, &mut t);
        w.mul_w_inv(&self.layout, &t, &mut w2r3);
        let mut rhs = vec![0.0; n + self.p];
        rhs[..n].copy_from_slice(r1);
        mul_t(&self.g, &w2r3, &mut rhs[..n]);
        rhs[n..].copy_from_slice(r2);
        self.ldl.solve(&mut rhs);
        let dx = rhs[..n].to_vec();
        let dy = rhs[n..].to_vec();
        // dz = W^{-2} (G dx - r3)
        let mut gx = mul(&self.g, &dx);
        for (v, r) in gx.iter_mut().zip(r3) {
            *v -= r;
        }
        w.mul_w_inv(&self.layout, &gx, &mut t);
        let mut dz = vec![0.0; m];
        w.mul_w_inv(&self.layout, &t, &mut dz);
        (dx, dy, dz)
    }

    #[allow(clippy::too_many_arguments)]
    fn residual(
        &self,
        w: &Scaling,
        r1: &[f64],
        r2: &[f64],
        r3: &[f64],
        dx: &[f64],
        dy: &[f64],
        dz: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut e1 = r1.to_vec();
        let mut t = vec![0.0; self.n];
        mul_t(&self.a, dy, &mut t);
        mul_t(&self.g, dz, &mut t);
        sub(&mut e1, &t);
        let mut e2 = r2.to_vec();
        sub(&mut e2, &mul(&self.a, dx));
        let mut e3 = r3.to_vec();
        sub(&mut e3, &mul(&self.g, dx));
        let mut wz = vec![0.0; self.m];
        let mut w2z = vec![0.0; self.m];
        w.mul_w(&self.layout, dz, &mut wz);
        w.mul_w(&self.layout, &wz, &mut w2z);
        add(&mut e3, &w2z);
        (e1, e2, e3)
    }
}

pub(crate) fn mul(rows: &[SparseRow], x: &[f64]) -> Vec<f64> {
    rows.iter()
        .map(|r| r.iter().map(|&(j, c)| c * x[j]).sum())
        .collect()
}

/// `out += rows' y`.
pub(crate) fn mul_t(rows: &[SparseRow], y: &[f64], out: &mut [f64]) {
    for (r, &yi) in rows.iter().zip(y) {
        if yi != 0.0 {
            for &(j, c) in r {
                out[j] += c * yi;
            }
        }
    }
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn add(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(p, q)| *p += q);
}

fn sub(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(p, q)| *p -= q);
}
