//! Local improvement for goals that reward losses.
//!
//! When the objective gains from higher consumption, the loss regularization
//! keeps the relaxation tight but steers the optimum towards loss-minimizing
//! flows. The convex-concave procedure below recovers the loss-seeking optimum
//! of the exact branch-flow model. Writing `l w = ((l + w)^2 - (l - w)^2) / 4`,
//! the reverse inequality `P^2 + Q^2 >= l w` becomes
//!
//! ```text
//! ((l + w) / 2)^2 <= P^2 + Q^2 + ((l - w) / 2)^2
//! ```
//!
//! whose right side is convex. Linearizing it at the current point gives an
//! inner approximation, so every iterate is exact up to a penalized slack and
//! the true objective never worsens.
//!
//! When other constraints bind (typically a voltage bound together with an
//! interface window) the relaxation can stay inexact even without a loss
//! reward. A trust-region sequential linearization of `l w = P^2 + Q^2` on
//! every branch then restores an exact local optimum.

use super::{
    extract_point, solve_program, Goal, OperatingPoint, OpfError, OpfProgram, OpfVars,
    EXACTNESS_TOLERANCE,
};
use crate::conic::{self, AffineExpr, ConicSolution, SolveStatus};
use crate::grid::Network;

const MAX_ROUNDS: usize = 40;
/// Stop once a round improves the true objective by less than this, p.u.
const IMPROVEMENT_TOL: f64 = 1e-9;
/// Penalty on the linearization slack; well above any loss reward.
const SLACK_PENALTY: f64 = 10.0;

/// Trust-region radius bounds for the restoration, p.u.
const TRUST_INIT: f64 = 0.05;
const TRUST_MIN: f64 = 1e-10;
const TRUST_MAX: f64 = 1.0;
const RESTORE_ROUNDS: usize = 80;
/// Penalty on elastic slacks of the linearized equalities.
const ELASTIC_PENALTY: f64 = 100.0;

/// Marginal gain of each branch's losses for the goal (positive when rewarded).
fn loss_gains(net: &Network, goal: &Goal) -> Vec<f64> {
    let pu = net.per_unit();
    net.branches
        .iter()
        .map(|b| {
            let (r, x) = (pu.impedance(b.r), pu.impedance(b.x));
            match goal.weights() {
                Some((pi_p, pi_q)) => -(pi_p * r + pi_q * x),
                None => match *goal {
                    Goal::Ray { angle, .. } => angle.cos() * r + angle.sin() * x,
                    _ => 0.0,
                },
            }
        })
        .collect()
}

/// Minimized form of the goal's true objective.
fn score(goal: &Goal, op: &OperatingPoint) -> f64 {
    match goal {
        Goal::Ray { .. } => -op.objective,
        _ => op.objective,
    }
}

/// Solves the program; with fixed activation, loss-rewarding goals and
/// inexact optima are then refined towards a local optimum of the exact model.
pub fn solve_program_exact(
    net: &Network,
    built: &OpfProgram,
) -> Result<(OperatingPoint, ConicSolution), OpfError> {
    let (op, sol) = solve_program(net, built)?;
    let fixed = built.vars.units.iter().flatten().all(|u| u.x.is_none());
    let gains = loss_gains(net, &built.goal);
    let rewarded: Vec<usize> = net
        .in_service_branches()
        .filter(|&k| gains[k] > 0.0)
        .collect();
    if !fixed {
        return Ok((op, sol));
    }
    let relaxed = sol.clone();
    let (op, sol) = if rewarded.is_empty() {
        (op, sol)
    } else {
        refine(net, built, &rewarded, op, sol)
    };
    if op.exactness_residual <= EXACTNESS_TOLERANCE {
        return Ok((op, sol));
    }
    match restore(net, built, &relaxed) {
        Some((exact, exact_sol)) => Ok((
            OperatingPoint {
                model_objective: op.model_objective,
                iterations: op.iterations + exact.iterations,
                ..exact
            },
            exact_sol,
        )),
        None => Ok((op, sol)),
    }
}

fn refine(
    net: &Network,
    built: &OpfProgram,
    rewarded: &[usize],
    mut best: OperatingPoint,
    mut best_sol: ConicSolution,
) -> (OperatingPoint, ConicSolution) {
    let model_objective = best.model_objective;
    let mut iterations = best.iterations;
    let mut x0 = best_sol.x.clone();
    let mut last_score = score(&built.goal, &best);
    for round in 0..MAX_ROUNDS {
        let program = linearized(net, built, rewarded, &x0);
        let next = match conic::solve(&program, &super::opf_solver_settings()) {
            Ok(s) if s.status == SolveStatus::Optimal => s,
            Ok(s) => {
                log::debug!("refinement round {round} stopped: {:?}", s.status);
                break;
            }
            Err(e) => {
                log::debug!("refinement round {round} stopped: {e}");
                break;
            }
        };
        iterations += next.iterations;
        let cand = extract_point(net, built, &next);
        let cand_score = score(&built.goal, &cand);
        let step = last_score - cand_score;
        last_score = cand_score;
        x0.clone_from(&next.x);
        let best_exact = best.exactness_residual <= EXACTNESS_TOLERANCE;
        if cand.exactness_residual <= EXACTNESS_TOLERANCE
            && (!best_exact || cand_score < score(&built.goal, &best))
        {
            best = cand;
            best_sol = next;
        }
        if step.abs() < IMPROVEMENT_TOL && best.exactness_residual <= EXACTNESS_TOLERANCE {
            break;
        }
    }
    best.model_objective = model_objective;
    best.iterations = iterations;
    (best, best_sol)
}

/// The built program where every loss-rewarding branch trades its current
/// cone for the linearized reverse cone at `x0`.
fn linearized(
    net: &Network,
    built: &OpfProgram,
    rewarded: &[usize],
    x0: &[f64],
) -> conic::ConicProgram {
    let mut prog = built.program.clone();
    let OpfVars {
        p,
        q,
        l,
        w,
        current_cone,
        ..
    } = &built.vars;
    let topo = net.topology();
    let drop: std::collections::HashSet<usize> =
        rewarded.iter().filter_map(|&k| current_cone[k]).collect();
    prog.cones = std::mem::take(&mut prog.cones)
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, c)| c)
        .collect();
    for &k in rewarded {
        let (pk, qk, lk) = (p[k].unwrap(), q[k].unwrap(), l[k].unwrap());
        let wi = w[topo.oriented[k].expect("oriented").0];
        prog.objective[lk] = 0.0;
        let (p0, q0, l0, w0) = (x0[pk], x0[qk], x0[lk], x0[wi]);
        let h = 0.5 * (l0 - w0);
        let g0 = p0 * p0 + q0 * q0 + h * h;
        let s = prog.add_named_var(0.0, f64::INFINITY, SLACK_PENALTY, format!("ccp[{k}]"));
        // 2 u >= ((l + w) / 2)^2 with u = (g0 + grad . (x - x0) + s) / 2
        let lin_const = g0 - 2.0 * p0 * p0 - 2.0 * q0 * q0 - h * (l0 - w0);
        let u = AffineExpr {
            terms: vec![(pk, p0), (qk, q0), (lk, 0.5 * h), (wi, -0.5 * h), (s, 0.5)],
            constant: 0.5 * lin_const,
        };
        let t = AffineExpr {
            terms: vec![(lk, 0.5), (wi, 0.5)],
            constant: 0.0,
        };
        prog.add_cone(u, AffineExpr::constant(1.0), vec![t]);
    }
    prog
}

/// Summed cone residual `|l w - P^2 - Q^2|` at `x`.
fn total_residual(net: &Network, built: &OpfProgram, x: &[f64]) -> f64 {
    let OpfVars { p, q, l, w, .. } = &built.vars;
    let topo = net.topology();
    net.in_service_branches()
        .map(|k| {
            let wi = w[topo.oriented[k].expect("oriented").0];
            (x[l[k].unwrap()] * x[wi] - x[p[k].unwrap()].powi(2) - x[q[k].unwrap()].powi(2)).abs()
        })
        .sum()
}

/// Trust-region sequential linearization from the relaxed optimum towards an exact
/// local optimum; `None` when no exact iterate was reached.
fn restore(
    net: &Network,
    built: &OpfProgram,
    relaxed: &ConicSolution,
) -> Option<(OperatingPoint, ConicSolution)> {
    let merit = |op: &OperatingPoint, x: &[f64]| {
        score(&built.goal, op) + ELASTIC_PENALTY * total_residual(net, built, x)
    };
    let mut x0 = relaxed.x.clone();
    let start = extract_point(net, built, relaxed);
    let mut m0 = merit(&start, &x0);
    let mut rho = TRUST_INIT;
    let mut best: Option<(OperatingPoint, ConicSolution)> = None;
    let mut iterations = 0;
    for round in 0..RESTORE_ROUNDS {
        if rho < TRUST_MIN {
            break;
        }
        let program = sequential(net, built, &x0, rho);
        let next = match conic::solve(&program, &super::opf_solver_settings()) {
            Ok(s) if s.status == SolveStatus::Optimal => s,
            other => {
                log::debug!("restoration round {round}: {:?}", other.map(|s| s.status));
                rho *= 0.25;
                continue;
            }
        };
        iterations += next.iterations;
        let cand = extract_point(net, built, &next);
        let m1 = merit(&cand, &next.x);
        if m1 >= m0 - 1e-12 * m0.abs().max(1.0) {
            rho *= 0.25;
            continue;
        }
        let step = m0 - m1;
        if cand.exactness_residual <= EXACTNESS_TOLERANCE
            && best
                .as_ref()
                .is_none_or(|(b, _)| score(&built.goal, &cand) < score(&built.goal, b))
        {
            best = Some((cand, next.clone()));
        }
        x0.clone_from(&next.x);
        m0 = m1;
        rho = (rho * 2.0).min(TRUST_MAX);
        if best.is_some() && step < IMPROVEMENT_TOL {
            break;
        }
    }
    best.map(|(mut op, sol)| {
        op.iterations = iterations;
        (op, sol)
    })
}

/// The built program with every branch cone replaced by the linearization of
/// `l w = P^2 + Q^2` at `x0` (elastic), inside a box of radius `rho` around `x0`.
fn sequential(net: &Network, built: &OpfProgram, x0: &[f64], rho: f64) -> conic::ConicProgram {
    let mut prog = built.program.clone();
    let OpfVars {
        p,
        q,
        l,
        w,
        current_cone,
        ..
    } = &built.vars;
    let topo = net.topology();
    let drop: std::collections::HashSet<usize> = current_cone.iter().flatten().copied().collect();
    prog.cones = std::mem::take(&mut prog.cones)
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !drop.contains(i))
        .map(|(_, c)| c)
        .collect();
    let mut boxed = std::collections::BTreeSet::new();
    for k in net.in_service_branches() {
        let (pk, qk, lk) = (p[k].unwrap(), q[k].unwrap(), l[k].unwrap());
        let wi = w[topo.oriented[k].expect("oriented").0];
        prog.objective[lk] = 0.0;
        let (p0, q0, l0, w0) = (x0[pk], x0[qk], x0[lk], x0[wi]);
        let up = prog.add_var(0.0, f64::INFINITY, ELASTIC_PENALTY);
        let dn = prog.add_var(0.0, f64::INFINITY, ELASTIC_PENALTY);
        // w0 l + l0 w - 2 p0 P - 2 q0 Q = l0 w0 - p0^2 - q0^2
        prog.add_equality(
            vec![
                (lk, w0),
                (wi, l0),
                (pk, -2.0 * p0),
                (qk, -2.0 * q0),
                (up, 1.0),
                (dn, -1.0),
            ],
            l0 * w0 - p0 * p0 - q0 * q0,
        );
        boxed.extend([pk, qk, lk, wi]);
    }
    for j in boxed {
        let (lo, hi) = (prog.lower[j], prog.upper[j]);
        let c = x0[j].clamp(lo, hi);
        prog.lower[j] = lo.max(c - rho);
        prog.upper[j] = hi.min(c + rho);
    }
    prog
}
