//! Homogeneous self-dual interior-point iteration on the standard form.

use super::cones::{dot, norm, ConeLayout, Scaling};
use super::kkt::{mul, mul_t, Kkt};
use super::standard::{RawSolution, StandardForm};
use super::{ConicError, Residuals, SolveStatus, SolverSettings};

const STEP_FRACTION: f64 = 0.99;
const MIN_STEP: f64 = 1e-10;

struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

struct Measures {
    pres: f64,
    dres: f64,
    gap: f64,
    pcost: f64,
    dcost: f64,
}

pub(crate) fn solve_standard(
    sf: &StandardForm,
    settings: &SolverSettings,
) -> Result<RawSolution, ConicError> {
    let mut kkt = Kkt::new(sf);
    let layout = kkt.layout.clone();
    let (n, p, m) = (sf.n, sf.p(), sf.m());
    let tol = settings.tol;
    let degree = layout.degree() as f64;

    let cnorm = norm(&sf.c).max(1.0);
    let bnorm = norm(&sf.b).max(1.0);
    let hnorm = norm(&sf.h).max(1.0);

    let mut it = initial_point(sf, &mut kkt, &layout);
    let mut best: Option<(f64, Iterate, Measures)> = None;

    let mut last_iter = 0;
    for iter in 0..=settings.max_iter {
        last_iter = iter;
        // Residuals of the embedding.
        let mut rx = vec![0.0; n];
        mul_t(&kkt.a, &it.y, &mut rx);
        mul_t(&kkt.g, &it.z, &mut rx);
        let atyz = rx.clone();
        for j in 0..n {
            rx[j] += sf.c[j] * it.tau;
        }
        let ax = mul(&kkt.a, &it.x);
        let ry: Vec<f64> = (0..p).map(|i| ax[i] - sf.b[i] * it.tau).collect();
        let gx = mul(&kkt.g, &it.x);
        let gxs: Vec<f64> = (0..m).map(|i| gx[i] + it.s[i]).collect();
        let rz: Vec<f64> = (0..m).map(|i| gxs[i] - sf.h[i] * it.tau).collect();
        let cx = dot(&sf.c, &it.x);
        let by_hz = dot(&sf.b, &it.y) + dot(&sf.h, &it.z);
        let rt = it.kappa + cx + by_hz;

        let sz = dot(&it.s, &it.z);
        let meas = Measures {
            pres: (norm(&ry) / bnorm).max(norm(&rz) / hnorm) / it.tau,
            dres: norm(&rx) / cnorm / it.tau,
            gap: sz / (it.tau * it.tau),
            pcost: cx / it.tau,
            dcost: -by_hz / it.tau,
        };
        let scale = meas.pcost.abs().max(meas.dcost.abs());
        let gap_ok = meas.gap <= tol.gap_abs || meas.gap <= tol.gap_rel * scale;
        if meas.pres <= tol.feas && meas.dres <= tol.feas && gap_ok {
            return Ok(finish(SolveStatus::Optimal, &it, iter, &meas));
        }
        if it.tau < it.kappa {
            if by_hz < 0.0 && norm(&atyz) / -by_hz <= tol.infeas {
                let f = -1.0 / by_hz;
                return Ok(RawSolution {
                    status: SolveStatus::Infeasible,
                    x: vec![0.0; n],
                    y: it.y.iter().map(|v| v * f).collect(),
                    z: it.z.iter().map(|v| v * f).collect(),
                    iterations: iter,
                    residuals: Residuals {
                        primal: f64::NAN,
                        dual: norm(&atyz) * f,
                        gap: f64::NAN,
                    },
                });
            }
            if cx < 0.0 && (norm(&ax) / bnorm).max(norm(&gxs) / hnorm) / -cx <= tol.infeas {
                let f = -1.0 / cx;
                return Ok(RawSolution {
                    status: SolveStatus::Unbounded,
                    x: it.x.iter().map(|v| v * f).collect(),
                    y: vec![0.0; p],
                    z: vec![0.0; m],
                    iterations: iter,
                    residuals: Residuals {
                        primal: norm(&ax).max(norm(&gxs)) * f,
                        dual: f64::NAN,
                        gap: f64::NAN,
                    },
                });
            }
        }
        let merit = meas.pres.max(meas.dres).max(meas.gap / scale.max(1.0));
        if merit.is_finite() && best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, it.clone_state(), meas));
        }
        if iter == settings.max_iter {
            break;
        }

        // Newton step.
        let w = Scaling::compute(&layout, &it.s, &it.z);
        kkt.factor(&w);
        let mu = (sz + it.tau * it.kappa) / (degree + 1.0);
        let neg_c: Vec<f64> = sf.c.iter().map(|v| -v).collect();
        let (x1, y1, z1) = kkt.solve(&w, &neg_c, &sf.b, &sf.h);
        let q_x1 = dot(&sf.c, &x1) + dot(&sf.b, &y1) + dot(&sf.h, &z1);

        let lam = &w.lambda;
        let mut lam_sq = vec![0.0; m];
        layout.circ(lam, lam, &mut lam_sq);

        let direction = |sigma: f64, ds_rhs: &[f64], dk_rhs: f64| -> Direction {
            let f = 1.0 - sigma;
            let mut tmp = vec![0.0; m];
            layout.circ_div(lam, ds_rhs, &mut tmp);
            let mut w_tmp = vec![0.0; m];
            w.mul_w(&layout, &tmp, &mut w_tmp);
            let r1: Vec<f64> = rx.iter().map(|v| -f * v).collect();
            let r2: Vec<f64> = ry.iter().map(|v| -f * v).collect();
            let r3: Vec<f64> = (0..m).map(|i| -f * rz[i] - w_tmp[i]).collect();
            let (x2, y2, z2) = kkt.solve(&w, &r1, &r2, &r3);
            let q_x2 = dot(&sf.c, &x2) + dot(&sf.b, &y2) + dot(&sf.h, &z2);
            let dtau = (-f * rt - dk_rhs / it.tau - q_x2) / (q_x1 - it.kappa / it.tau);
            let dx: Vec<f64> = (0..n).map(|j| x2[j] + dtau * x1[j]).collect();
            let dy: Vec<f64> = (0..p).map(|i| y2[i] + dtau * y1[i]).collect();
            let dz: Vec<f64> = (0..m).map(|i| z2[i] + dtau * z1[i]).collect();
            // ds = W (lambda \ ds_rhs) - W^2 dz
            let mut wdz = vec![0.0; m];
            w.mul_w(&layout, &dz, &mut wdz);
            let mut w2dz = vec![0.0; m];
            w.mul_w(&layout, &wdz, &mut w2dz);
            let ds: Vec<f64> = (0..m).map(|i| w_tmp[i] - w2dz[i]).collect();
            let dkappa = (dk_rhs - it.kappa * dtau) / it.tau;
            Direction {
                dx,
                dy,
                dz,
                ds,
                dtau,
                dkappa,
            }
        };

        // Predictor.
        let aff_rhs: Vec<f64> = lam_sq.iter().map(|v| -v).collect();
        let aff = direction(0.0, &aff_rhs, -it.tau * it.kappa);
        if !aff.is_finite() {
            log::debug!("non-finite affine direction at iteration {iter}");
            break;
        }
        let alpha_aff = step_length(&layout, &it, &aff, 1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        // Corrector.
        let mut wi_ds = vec![0.0; m];
        w.mul_w_inv(&layout, &aff.ds, &mut wi_ds);
        let mut w_dz = vec![0.0; m];
        w.mul_w(&layout, &aff.dz, &mut w_dz);
        let mut cross = vec![0.0; m];
        layout.circ(&wi_ds, &w_dz, &mut cross);
        let mut comb_rhs: Vec<f64> = (0..m).map(|i| -lam_sq[i] - cross[i]).collect();
        layout.add_identity(&mut comb_rhs, sigma * mu);
        let dk_rhs = -it.tau * it.kappa - aff.dtau * aff.dkappa + sigma * mu;
        let dir = direction(sigma, &comb_rhs, dk_rhs);
        if !dir.is_finite() {
            log::debug!("non-finite combined direction at iteration {iter}");
            break;
        }
        let alpha = (STEP_FRACTION * step_length(&layout, &it, &dir, 1e6)).min(1.0);
        if alpha < MIN_STEP {
            break;
        }
        axpy(&mut it.x, alpha, &dir.dx);
        axpy(&mut it.y, alpha, &dir.dy);
        axpy(&mut it.z, alpha, &dir.dz);
        axpy(&mut it.s, alpha, &dir.ds);
        it.tau += alpha * dir.dtau;
        it.kappa += alpha * dir.dkappa;
        if !(it.tau > 0.0 && it.kappa > 0.0) {
            return Err(ConicError::NumericalBreakdown {
                iteration: iter,
                reason: "homogeneous variables left the cone".into(),
            });
        }
    }

    match best {
        Some((_, b, meas)) => Ok(finish(SolveStatus::IterationLimit, &b, last_iter, &meas)),
        None => Err(ConicError::NumericalBreakdown {
            iteration: 0,
            reason: "no finite iterate".into(),
        }),
    }
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    dz: Vec<f64>,
    ds: Vec<f64>,
    dtau: f64,
    dkappa: f64,
}

impl Direction {
    fn is_finite(&self) -> bool {
        self.dtau.is_finite()
            && self.dkappa.is_finite()
            && [&self.dx, &self.dy, &self.dz, &self.ds]
                .iter()
                .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

impl Iterate {
    fn clone_state(&self) -> Self {
        Self {
            x: self.x.clone(),
            y: self.y.clone(),
            z: self.z.clone(),
            s: self.s.clone(),
            tau: self.tau,
            kappa: self.kappa,
        }
    }
}

fn step_length(layout: &ConeLayout, it: &Iterate, d: &Direction, cap: f64) -> f64 {
    let mut a = layout.max_step(&it.s, &d.ds, cap);
    a = a.min(layout.max_step(&it.z, &d.dz, cap));
    if d.dtau < 0.0 {
        a = a.min(-it.tau / d.dtau);
    }
    if d.dkappa < 0.0 {
        a = a.min(-it.kappa / d.dkappa);
    }
    a
}

fn finish(status: SolveStatus, it: &Iterate, iterations: usize, meas: &Measures) -> RawSolution {
    let t = it.tau;
    RawSolution {
        status,
        x: it.x.iter().map(|v| v / t).collect(),
        y: it.y.iter().map(|v| v / t).collect(),
        z: it.z.iter().map(|v| v / t).collect(),
        iterations,
        residuals: Residuals {
            primal: meas.pres,
            dual: meas.dres,
            gap: meas.gap,
        },
    }
}

fn initial_point(sf: &StandardForm, kkt: &mut Kkt, layout: &ConeLayout) -> Iterate {
    let (n, p, m) = (sf.n, sf.p(), sf.m());
    let ones_s: Vec<f64> = {
        let mut e = vec![0.0; m];
        layout.add_identity(&mut e, 1.0);
        e
    };
    let w = Scaling::compute(layout, &ones_s, &ones_s);
    kkt.factor(&w);

    // Primal: min |s|^2/2 + |x|^2-ish subject to Ax = b, Gx + s = h.
    let (x, _, dz) = kkt.solve(&w, &vec![0.0; n], &sf.b, &sf.h);
    let mut s: Vec<f64> = dz.iter().map(|v| -v).collect();
    shift_interior(layout, &mut s);

    // Dual: A'y + G'z + c = 0 with minimal |z|.
    let neg_c: Vec<f64> = sf.c.iter().map(|v| -v).collect();
    let (_, y, mut z) = kkt.solve(&w, &neg_c, &vec![0.0; p], &vec![0.0; m]);
    shift_interior(layout, &mut z);

    Iterate {
        x,
        y,
        z,
        s,
        tau: 1.0,
        kappa: 1.0,
    }
}

fn shift_interior(layout: &ConeLayout, v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let e = layout.min_eig(v);
    if e <= 0.0 || !e.is_finite() {
        let shift = if e.is_finite() { 1.0 - e } else { 1.0 };
        layout.add_identity(v, shift);
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(p, q)| *p += a * q);
}
