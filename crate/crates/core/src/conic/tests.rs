use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INF: f64 = f64::INFINITY;

/// Independent first-order check of a returned primal-dual pair:
/// returns `(primal violation, stationarity residual, complementarity, dual cone violation)`.
fn kkt_report(p: &ConicProgram, s: &ConicSolution) -> (f64, f64, f64, f64) {
    let x = &s.x;
    let n = p.num_vars();
    let mut pv: f64 = 0.0;
    for j in 0..n {
        pv = pv.max(p.lower[j] - x[j]).max(x[j] - p.upper[j]);
    }
    for e in &p.equalities {
        let ax: f64 = e.terms.iter().map(|&(j, c)| c * x[j]).sum();
        pv = pv.max((ax - e.rhs).abs());
    }
    for r in &p.rows {
        let ax: f64 = r.terms.iter().map(|&(j, c)| c * x[j]).sum();
        pv = pv.max(r.lo - ax).max(ax - r.hi);
    }
    for k in &p.cones {
        let (u, v) = (k.u.eval(x), k.v.eval(x));
        let w2: f64 = k.w.iter().map(|e| e.eval(x).powi(2)).sum();
        pv = pv.max(-u).max(-v).max(w2 - 2.0 * u * v);
    }

    let mut grad = p.objective.clone();
    let mut compl: f64 = 0.0;
    let mut dv: f64 = 0.0;
    for (i, e) in p.equalities.iter().enumerate() {
        for &(j, c) in &e.terms {
            grad[j] += s.eq_dual[i] * c;
        }
    }
    for j in 0..n {
        grad[j] += -s.lower_dual[j] + s.upper_dual[j];
        dv = dv.max(-s.lower_dual[j]).max(-s.upper_dual[j]);
        if p.lower[j].is_finite() {
            compl += s.lower_dual[j] * (x[j] - p.lower[j]);
        }
        if p.upper[j].is_finite() {
            compl += s.upper_dual[j] * (p.upper[j] - x[j]);
        }
    }
    for (i, r) in p.rows.iter().enumerate() {
        let ax: f64 = r.terms.iter().map(|&(j, c)| c * x[j]).sum();
        for &(j, c) in &r.terms {
            grad[j] += (-s.row_lower_dual[i] + s.row_upper_dual[i]) * c;
        }
        dv = dv.max(-s.row_lower_dual[i]).max(-s.row_upper_dual[i]);
        if r.lo.is_finite() {
            compl += s.row_lower_dual[i] * (ax - r.lo);
        }
        if r.hi.is_finite() {
            compl += s.row_upper_dual[i] * (r.hi - ax);
        }
    }
    for (k, cone) in p.cones.iter().enumerate() {
        let z = &s.cone_dual[k];
        let exprs = std::iter::once(&cone.u)
            .chain(std::iter::once(&cone.v))
            .chain(cone.w.iter());
        for (zi, e) in z.iter().zip(exprs.clone()) {
            for &(j, c) in &e.terms {
                grad[j] -= zi * c;
            }
        }
        compl += z
            .iter()
            .zip(exprs)
            .map(|(zi, e)| zi * e.eval(x))
            .sum::<f64>();
        let zw2: f64 = z[2..].iter().map(|v| v * v).sum();
        dv = dv.max(-z[0]).max(-z[1]).max(zw2 - 2.0 * z[0] * z[1]);
    }
    let stat = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    (pv, stat, compl.abs(), dv)
}

#[test]
fn lp_with_lower_bound() {
    let mut p = ConicProgram::new();
    p.add_var(3.0, INF, 1.0);
    let s = solve_default(&p).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.x[0] - 3.0).abs() < 1e-7);
    assert!((s.lower_dual[0] - 1.0).abs() < 1e-7);
}

#[test]
fn rotated_cone_tight_at_optimum() {
    // min u  s.t.  2 u v >= w^2, v = 1, w = 4  ->  u = 8
    let mut p = ConicProgram::new();
    let u = p.add_var(-INF, INF, 1.0);
    let v = p.add_var(1.0, 1.0, 0.0);
    let w = p.add_var(4.0, 4.0, 0.0);
    p.add_cone(u.into(), v.into(), vec![w.into()]);
    let s = solve_default(&p).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.x[u] - 8.0).abs() < 1e-6, "{:?}", s.x);
    let (pv, st, cp, dv) = kkt_report(&p, &s);
    assert!(
        pv < 1e-6 && st < 1e-6 && cp < 1e-6 && dv < 1e-6,
        "{pv} {st} {cp} {dv}"
    );
}

#[test]
fn conflicting_equalities_are_infeasible() {
    let mut p = ConicProgram::new();
    let x = p.add_var(-INF, INF, 1.0);
    p.add_equality(vec![(x, 1.0)], 1.0);
    p.add_equality(vec![(x, 1.0)], 2.0);
    let s = solve_default(&p).unwrap();
    assert_eq!(s.status, SolveStatus::Infeasible);
    assert_eq!(s.objective_value, f64::INFINITY);
}

#[test]
fn cone_with_small_box_is_infeasible() {
    let mut p = ConicProgram::new();
    let u = p.add_var(0.0, 1.0, 0.0);
    let v = p.add_var(0.0, 1.0, 0.0);
    let w = p.add_var(3.0, 3.0, 0.0);
    p.add_cone(u.into(), v.into(), vec![w.into()]);
    let s = solve_default(&p).unwrap();
    assert_eq!(s.status, SolveStatus::Infeasible);
}

#[test]
fn unbounded_ray_is_reported() {
    let mut p = ConicProgram::new();
    let x = p.add_var(0.0, INF, -1.0);
    let y = p.add_var(0.0, INF, 0.0);
    p.add_row(vec![(x, 1.0), (y, -1.0)], -INF, 1.0);
    let s = solve_default(&p).unwrap();
    assert_eq!(s.status, SolveStatus::Unbounded);
    assert!(s.x[x] > 0.0);
}

#[test]
fn ranged_row_duals_have_the_right_sign() {
    // min -x - y  s.t. 0 <= x + y <= 2, x, y in [0, 1.5]; optimum on the row.
    let mut p = ConicProgram::new();
    let x = p.add_var(0.0, 1.5, -1.0);
    let y = p.add_var(0.0, 1.5, -1.0);
    p.add_row(vec![(x, 1.0), (y, 1.0)], 0.0, 2.0);
    let s = solve_default(&p).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.objective_value + 2.0).abs() < 1e-7);
    assert!((s.row_upper_dual[0] - 1.0).abs() < 1e-6);
    let (pv, st, cp, dv) = kkt_report(&p, &s);
    assert!(pv < 1e-7 && st < 1e-7 && cp < 1e-7 && dv < 1e-7);
}

#[test]
fn objective_scaling_leaves_minimizer_unchanged() {
    let build = |scale: f64| {
        let mut p = ConicProgram::new();
        let x = p.add_var(-INF, INF, 1.0 * scale);
        let y = p.add_var(-INF, INF, 2.0 * scale);
        // x^2 + y^2 <= 1 as a fixed-radius cone.
        p.add_cone(
            AffineExpr::constant(std::f64::consts::FRAC_1_SQRT_2),
            AffineExpr::constant(std::f64::consts::FRAC_1_SQRT_2),
            vec![x.into(), y.into()],
        );
        p
    };
    let a = solve_default(&build(1.0)).unwrap();
    let b = solve_default(&build(1000.0)).unwrap();
    let r = 5f64.sqrt();
    for s in [&a, &b] {
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!(
            (s.x[0] + 1.0 / r).abs() < 1e-6 && (s.x[1] + 2.0 / r).abs() < 1e-6,
            "{:?}",
            s.x
        );
    }
}

/// Minimizes a convex function over a box by nested ternary search.
fn ternary_2d(f: impl Fn(f64, f64) -> f64, lo: [f64; 2], hi: [f64; 2]) -> (f64, f64) {
    let inner = |x: f64| {
        let (mut a, mut b) = (lo[1], hi[1]);
        for _ in 0..200 {
            let (m1, m2) = (a + (b - a) / 3.0, b - (b - a) / 3.0);
            if f(x, m1) <= f(x, m2) {
                b = m2;
            } else {
                a = m1;
            }
        }
        let y = 0.5 * (a + b);
        (f(x, y), y)
    };
    let (mut a, mut b) = (lo[0], hi[0]);
    for _ in 0..200 {
        let (m1, m2) = (a + (b - a) / 3.0, b - (b - a) / 3.0);
        if inner(m1).0 <= inner(m2).0 {
            b = m2;
        } else {
            a = m1;
        }
    }
    let x = 0.5 * (a + b);
    (x, inner(x).1)
}

#[test]
fn random_boxed_quadratics_match_search_oracle() {
    // min c'x + |x - a|^2 over a box, written with a rotated cone t >= |x - a|^2.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let c: [f64; 2] = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        let a: [f64; 2] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let lo = [rng.gen_range(-2.0..0.0), rng.gen_range(-2.0..0.0)];
        let hi = [
            lo[0] + rng.gen_range(0.2..2.0),
            lo[1] + rng.gen_range(0.2..2.0),
        ];
        let mut p = ConicProgram::new();
        let x0 = p.add_var(lo[0], hi[0], c[0]);
        let x1 = p.add_var(lo[1], hi[1], c[1]);
        let t = p.add_var(-INF, INF, 1.0);
        p.add_cone(
            AffineExpr::scaled(t, 0.5),
            AffineExpr::constant(1.0),
            vec![
                AffineExpr {
                    terms: vec![(x0, 1.0)],
                    constant: -a[0],
                },
                AffineExpr {
                    terms: vec![(x1, 1.0)],
                    constant: -a[1],
                },
            ],
        );
        let s = solve_default(&p).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        let f = |u: f64, v: f64| c[0] * u + c[1] * v + (u - a[0]).powi(2) + (v - a[1]).powi(2);
        let (ox, oy) = ternary_2d(f, lo, hi);
        // Objective accuracy eps bounds the minimizer error by sqrt(eps) for this modulus.
        assert!(
            (s.x[x0] - ox).abs() < 1e-5 && (s.x[x1] - oy).abs() < 1e-5,
            "{:?} vs {ox} {oy}, {:?} it {}",
            s.x,
            s.residuals,
            s.iterations
        );
        assert!((s.objective_value - f(ox, oy)).abs() < 1e-7);
        let (pv, st, cp, dv) = kkt_report(&p, &s);
        assert!(
            pv < 1e-7 && st < 1e-6 && cp < 1e-6 && dv < 1e-7,
            "{pv} {st} {cp} {dv}"
        );
    }
}

#[test]
fn chain_of_cones_satisfies_kkt() {
    // A small DistFlow-like chain: flows, squared currents and voltages on a path.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let nb = 12;
    let mut p = ConicProgram::new();
    let w: Vec<usize> = (0..nb)
        .map(|i| {
            if i == 0 {
                p.add_var(1.0, 1.0, 0.0)
            } else {
                p.add_var(0.81, 1.21, 0.0)
            }
        })
        .collect();
    let mut flows = Vec::new();
    for k in 1..nb {
        let r = rng.gen_range(0.01..0.05);
        let pf = p.add_var(-INF, INF, 0.0);
        let l = p.add_var(0.0, INF, r);
        flows.push((pf, l, r));
        // w_k = w_{k-1} - 2 r P + r^2 l
        p.add_equality(
            vec![(w[k], 1.0), (w[k - 1], -1.0), (pf, 2.0 * r), (l, -r * r)],
            0.0,
        );
        // 2 l (w/2) >= P^2
        p.add_cone(l.into(), AffineExpr::scaled(w[k - 1], 0.5), vec![pf.into()]);
    }
    for k in 0..nb - 1 {
        let (pf, l, r) = flows[k];
        let load = rng.gen_range(0.01..0.05);
        let mut terms = vec![(pf, 1.0), (l, -r)];
        if k + 1 < nb - 1 {
            terms.push((flows[k + 1].0, -1.0));
        }
        p.add_equality(terms, load);
    }
    p.objective[flows[0].0] = 1.0;
    let s = solve_default(&p).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    let (pv, st, cp, dv) = kkt_report(&p, &s);
    assert!(
        pv < 1e-7 && st < 1e-6 && cp < 1e-6 && dv < 1e-7,
        "{pv} {st} {cp} {dv}"
    );
    // Loss-minimizing objective: the cones must be tight.
    for &(pf, l, _) in &flows {
        let wi = s.x[w[flows.iter().position(|f| f.0 == pf).unwrap()]];
        assert!((s.x[l] * wi - s.x[pf].powi(2)).abs() < 1e-6);
    }
}

#[test]
fn dump_lists_every_item() {
    let mut p = ConicProgram::new();
    let x = p.add_named_var(0.0, 1.0, 1.0, "x");
    let y = p.add_var(-INF, INF, 0.0);
    p.add_equality(vec![(x, 1.0), (y, -2.0)], 0.5);
    p.add_row(vec![(y, 1.0)], -1.0, 1.0);
    p.add_cone(x.into(), AffineExpr::constant(1.0), vec![y.into()]);
    let text = dump_program(&p);
    assert!(text.contains("var x in"));
    assert!(text.contains("var x1 in"));
    assert!(text.lines().any(|l| l.starts_with("eq0:")));
    assert!(text.lines().any(|l| l.starts_with("row0:")));
    assert!(text.lines().any(|l| l.starts_with("cone0:")));
}

#[test]
fn invalid_bounds_are_rejected() {
    let mut p = ConicProgram::new();
    p.add_var(1.0, 0.0, 0.0);
    assert!(matches!(
        solve_default(&p),
        Err(ConicError::InvalidProgram(_))
    ));
}
