//! Cone arithmetic for `R+^l x SOC_1 x ... x SOC_k`: Jordan products,
//! Nesterov-Todd scaling and step lengths.

#[derive(Debug, Clone)]
pub(crate) struct ConeLayout {
    pub n_lp: usize,
    /// `(offset, dim)` of each SOC block.
    pub soc: Vec<(usize, usize)>,
}

impl ConeLayout {
    pub fn new(n_lp: usize, dims: &[usize]) -> Self {
        let mut soc = Vec::with_capacity(dims.len());
        let mut off = n_lp;
        for &d in dims {
            soc.push((off, d));
            off += d;
        }
        Self { n_lp, soc }
    }

    pub fn degree(&self) -> usize {
        self.n_lp + self.soc.len()
    }

    /// Smallest "eigenvalue" over all blocks; positive iff `v` is interior.
    pub fn min_eig(&self, v: &[f64]) -> f64 {
        let mut m = f64::INFINITY;
        for &x in &v[..self.n_lp] {
            m = m.min(x);
        }
        for &(o, d) in &self.soc {
            let b = &v[o..o + d];
            m = m.min(b[0] - norm(&b[1..]));
        }
        m
    }

    pub fn add_identity(&self, v: &mut [f64], t: f64) {
        for x in &mut v[..self.n_lp] {
            *x += t;
        }
        for &(o, _) in &self.soc {
            v[o] += t;
        }
    }

    /// Jordan product `u ∘ v`.
    pub fn circ(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        for i in 0..self.n_lp {
            out[i] = u[i] * v[i];
        }
        for &(o, d) in &self.soc {
            let (ub, vb) = (&u[o..o + d], &v[o..o + d]);
            out[o] = dot(ub, vb);
            for i in 1..d {
                out[o + i] = ub[0] * vb[i] + vb[0] * ub[i];
            }
        }
    }

    /// Solves `lambda ∘ out = v`.
    pub fn circ_div(&self, lambda: &[f64], v: &[f64], out: &mut [f64]) {
        for i in 0..self.n_lp {
            out[i] = v[i] / lambda[i];
        }
        for &(o, d) in &self.soc {
            let (l, vb) = (&lambda[o..o + d], &v[o..o + d]);
            let det = l[0] * l[0] - dot(&l[1..], &l[1..]);
            let u0 = (l[0] * vb[0] - dot(&l[1..], &vb[1..])) / det;
            out[o] = u0;
            for i in 1..d {
                out[o + i] = (vb[i] - u0 * l[i]) / l[0];
            }
        }
    }

    /// Largest `alpha` in `[0, cap]` with `x + alpha dx` in the cone.
    pub fn max_step(&self, x: &[f64], dx: &[f64], cap: f64) -> f64 {
        let mut alpha = cap;
        for i in 0..self.n_lp {
            if dx[i] < 0.0 {
                alpha = alpha.min(-x[i] / dx[i]);
            }
        }
        for &(o, d) in &self.soc {
            alpha = alpha.min(soc_step(&x[o..o + d], &dx[o..o + d], cap));
        }
        alpha.max(0.0)
    }
}

fn soc_step(x: &[f64], dx: &[f64], cap: f64) -> f64 {
    // q(a) = (x0 + a dx0)^2 - |x1 + a dx1|^2, q(0) > 0; exit at the first positive root.
    let a = dx[0] * dx[0] - dot(&dx[1..], &dx[1..]);
    let b = 2.0 * (x[0] * dx[0] - dot(&x[1..], &dx[1..]));
    let c = (x[0] * x[0] - dot(&x[1..], &x[1..])).max(0.0);
    let mut best = cap;
    if x[0] + cap * dx[0] < 0.0 {
        best = best.min(-x[0] / dx[0]);
    }
    let scale = a.abs().max(b.abs()).max(c);
    if scale == 0.0 {
        return best;
    }
    if a.abs() <= 1e-15 * scale {
        if b < 0.0 {
            best = best.min(-c / b);
        }
        return best;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return best;
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    let mut roots = [q / a, if q != 0.0 { c / q } else { f64::INFINITY }];
    roots.sort_by(|p, r| p.partial_cmp(r).unwrap_or(std::cmp::Ordering::Equal));
    for r in roots {
        if r > 0.0 {
            best = best.min(r);
            break;
        }
    }
    best
}

/// Nesterov-Todd scaling `W` with `W z = W^{-1} s = lambda`.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    /// LP blocks: `W_ii = sqrt(s_i / z_i)`.
    pub lp: Vec<f64>,
    /// SOC blocks: `W = eta * Wbar(wbar)`.
    pub soc: Vec<(f64, Vec<f64>)>,
    pub lambda: Vec<f64>,
}

impl Scaling {
    pub fn compute(layout: &ConeLayout, s: &[f64], z: &[f64]) -> Self {
        let lp: Vec<f64> = (0..layout.n_lp).map(|i| (s[i] / z[i]).sqrt()).collect();
        let mut soc = Vec::with_capacity(layout.soc.len());
        for &(o, d) in &layout.soc {
            let (sb, zb) = (&s[o..o + d], &z[o..o + d]);
            let sres = (sb[0] * sb[0] - dot(&sb[1..], &sb[1..])).max(1e-300);
            let zres = (zb[0] * zb[0] - dot(&zb[1..], &zb[1..])).max(1e-300);
            let (sn, zn) = (sres.sqrt(), zres.sqrt());
            let sbar: Vec<f64> = sb.iter().map(|v| v / sn).collect();
            let zbar: Vec<f64> = zb.iter().map(|v| v / zn).collect();
            let gamma = ((1.0 + dot(&sbar, &zbar)) / 2.0).sqrt();
            let mut wbar = vec![0.0; d];
            wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
            for i in 1..d {
                wbar[i] = (sbar[i] - zbar[i]) / (2.0 * gamma);
            }
            // Renormalize so that wbar'J wbar = 1 exactly.
            let wres = wbar[0] * wbar[0] - dot(&wbar[1..], &wbar[1..]);
            if wres > 0.0 {
                let f = wres.sqrt();
                wbar.iter_mut().for_each(|v| *v /= f);
            }
            soc.push(((sn / zn).sqrt(), wbar));
        }
        let mut sc = Self {
            lp,
            soc,
            lambda: vec![0.0; z.len()],
        };
        let mut lambda = vec![0.0; z.len()];
        sc.mul_w(layout, z, &mut lambda);
        sc.lambda = lambda;
        sc
    }

    /// `out = W v`.
    pub fn mul_w(&self, layout: &ConeLayout, v: &[f64], out: &mut [f64]) {
        for i in 0..layout.n_lp {
            out[i] = self.lp[i] * v[i];
        }
        for (k, &(o, d)) in layout.soc.iter().enumerate() {
            let (eta, w) = (&self.soc[k].0, &self.soc[k].1);
            wbar_mul(w, &v[o..o + d], &mut out[o..o + d], false);
            out[o..o + d].iter_mut().for_each(|x| *x *= eta);
        }
    }

    /// `out = W^{-1} v`.
    pub fn mul_w_inv(&self, layout: &ConeLayout, v: &[f64], out: &mut [f64]) {
        for i in 0..layout.n_lp {
            out[i] = v[i] / self.lp[i];
        }
        for (k, &(o, d)) in layout.soc.iter().enumerate() {
            let (eta, w) = (&self.soc[k].0, &self.soc[k].1);
            wbar_mul(w, &v[o..o + d], &mut out[o..o + d], true);
            out[o..o + d].iter_mut().for_each(|x| *x /= eta);
        }
    }

    /// Dense `W^{-2}` of SOC block `k`, row-major.
    pub fn soc_w_inv_sq(&self, k: usize, d: usize) -> Vec<f64> {
        let (eta, w) = (&self.soc[k].0, &self.soc[k].1);
        // Columns of W^{-1}, then square (W^{-1} is symmetric).
        let mut winv = vec![0.0; d * d];
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; d];
        for j in 0..d {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            wbar_mul(w, &e, &mut col, true);
            for i in 0..d {
                winv[i * d + j] = col[i] / eta;
            }
        }
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let v: f64 = (0..d).map(|t| winv[i * d + t] * winv[t * d + j]).sum();
                out[i * d + j] = v;
                out[j * d + i] = v;
            }
        }
        out
    }
}

/// `Wbar v` or `Wbar^{-1} v = J Wbar J v`.
fn wbar_mul(w: &[f64], v: &[f64], out: &mut [f64], inverse: bool) {
    let d = w.len();
    let sgn = if inverse { -1.0 } else { 1.0 };
    let w1v1 = dot(&w[1..], &v[1..]);
    out[0] = w[0] * v[0] + sgn * w1v1;
    let f = w1v1 / (1.0 + w[0]);
    for i in 1..d {
        out[i] = sgn * v[0] * w[i] + v[i] + f * w[i];
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> ConeLayout {
        ConeLayout::new(2, &[3, 4])
    }

    #[test]
    fn nt_scaling_maps_z_and_s_to_the_same_point() {
        let l = layout();
        let s = [0.5, 2.0, 3.0, 1.0, -0.5, 2.0, 0.3, -0.4, 1.1];
        let z = [1.5, 0.2, 2.0, -0.7, 0.9, 1.3, -0.2, 0.5, 0.1];
        let sc = Scaling::compute(&l, &s, &z);
        let mut a = vec![0.0; 9];
        sc.mul_w_inv(&l, &s, &mut a);
        for (x, y) in a.iter().zip(&sc.lambda) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {:?}", sc.lambda);
        }
        // W W^{-1} = I
        let mut b = vec![0.0; 9];
        sc.mul_w(&l, &a, &mut b);
        for (x, y) in b.iter().zip(&s) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn circ_div_inverts_circ() {
        let l = layout();
        let lam = [0.5, 2.0, 3.0, 1.0, -0.5, 2.0, 0.3, -0.4, 1.1];
        let u = [0.1, -0.2, 0.4, 0.5, 0.6, -0.3, 0.2, 0.1, 0.7];
        let mut v = vec![0.0; 9];
        l.circ(&lam, &u, &mut v);
        let mut back = vec![0.0; 9];
        l.circ_div(&lam, &v, &mut back);
        for (x, y) in back.iter().zip(&u) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn step_stops_at_cone_boundary() {
        let l = ConeLayout::new(0, &[3]);
        let x = [2.0, 0.0, 0.0];
        let dx = [0.0, 1.0, 0.0];
        let a = l.max_step(&x, &dx, 10.0);
        assert!((a - 2.0).abs() < 1e-12);
        let inward = [1.0, 0.0, 0.0];
        assert_eq!(l.max_step(&x, &inward, 10.0), 10.0);
    }

    #[test]
    fn w_inv_sq_matches_two_applications() {
        let l = ConeLayout::new(0, &[4]);
        let s = [2.0, 0.3, -0.4, 1.1];
        let z = [1.3, -0.2, 0.5, 0.1];
        let sc = Scaling::compute(&l, &s, &z);
        let m = sc.soc_w_inv_sq(0, 4);
        let v = [0.3, -1.0, 0.25, 2.0];
        let mut t = vec![0.0; 4];
        let mut t2 = vec![0.0; 4];
        sc.mul_w_inv(&l, &v, &mut t);
        sc.mul_w_inv(&l, &t, &mut t2);
        for i in 0..4 {
            let r: f64 = (0..4).map(|j| m[i * 4 + j] * v[j]).sum();
            assert!((r - t2[i]).abs() < 1e-12);
        }
    }
}
