//! Branch-flow (DistFlow) optimal power flow with flexible-unit activation.
//!
//! Per-unit model on the radial tree oriented away from the reference bus:
//!
//! ```text
//! P_k = pD_j - pG_j - inj_j + r_k l_k + sum(P_c, c child branch of j)
//! Q_k = qD_j - qG_j - jnj_j + x_k l_k + sum(Q_c)
//! w_j = w_i - 2 (r_k P_k + x_k Q_k) + |Z_k|^2 l_k
//! P_k^2 + Q_k^2 <= l_k w_i              (cone relaxation)
//! P_k^2 + Q_k^2 <= Smax_k^2
//! vmin^2 <= w <= vmax^2, w_ref = v_ref^2
//! ```
//!
//! The interface exchange `(P_int, Q_int)` is the net consumption seen at the
//! reference bus: the sum of flows leaving it plus its own demand, minus any
//! flexible output located there. Generators at the reference bus bound the
//! interface; generators elsewhere are dispatchable injections.
//!
//! Objectives that reward consumption also reward fictitious losses, which
//! makes the cone relaxation inexact. Each `l_k` therefore carries a cost that
//! outweighs the reward it would earn through `P_int`/`Q_int`, plus a small
//! floor so lossless lines stay tight. Free activation variables carry a tiny
//! cost so ties resolve towards fewer units.

mod polish;
mod sweep;

pub use polish::solve_program_exact;

pub use sweep::{sweep_power_flow, SweepError, LIMIT_TOLERANCE, SWEEP_MAX_ITER, SWEEP_TOLERANCE};

use crate::conic::{
    self, AffineExpr, ConicError, ConicProgram, ConicSolution, SolveStatus, SolverSettings,
};
use crate::grid::{Network, UnitId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::f64::consts::FRAC_1_SQRT_2;
use thiserror::Error;

/// Exactness threshold on `|P^2 + Q^2 - l w|`, p.u.
pub const EXACTNESS_TOLERANCE: f64 = 1e-6;
/// Loss weight margin on top of the reward a loss earns in the objective.
const LOSS_MARGIN: f64 = 1e-3;
/// Cost floor on every squared current.
const LOSS_FLOOR: f64 = 1e-5;
/// Cost per unit of activation in relaxed mode.
pub const ACTIVATION_COST: f64 = 1e-7;

/// Signs of the interface P and Q terms in the minimized objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectiveDirection {
    pub pi_p: i8,
    pub pi_q: i8,
}

impl ObjectiveDirection {
    pub const MIN_P: Self = Self { pi_p: 1, pi_q: 0 };
    pub const MAX_P: Self = Self { pi_p: -1, pi_q: 0 };
    pub const MIN_Q: Self = Self { pi_p: 0, pi_q: 1 };
    pub const MAX_Q: Self = Self { pi_p: 0, pi_q: -1 };
    pub const FEASIBILITY: Self = Self { pi_p: 0, pi_q: 0 };
    pub const ALL: [Self; 4] = [Self::MIN_P, Self::MAX_P, Self::MIN_Q, Self::MAX_Q];

    pub fn new(pi_p: i8, pi_q: i8) -> Result<Self, OpfError> {
        if !(-1..=1).contains(&pi_p) || !(-1..=1).contains(&pi_q) {
            return Err(OpfError::Model(format!(
                "direction ({pi_p}, {pi_q}) outside {{-1, 0, 1}}"
            )));
        }
        Ok(Self { pi_p, pi_q })
    }

    /// Parses `+p`, `-p`, `+q`, `-q` (the sign is the direction the interface
    /// exchange is pushed, so `-p` minimizes consumption), `min-p` style
    /// names, or raw coefficients `pi_p,pi_q`.
    pub fn parse(s: &str) -> Result<Self, OpfError> {
        match s.trim() {
            "-p" | "min-p" => Ok(Self::MIN_P),
            "+p" | "max-p" => Ok(Self::MAX_P),
            "-q" | "min-q" => Ok(Self::MIN_Q),
            "+q" | "max-q" => Ok(Self::MAX_Q),
            other => {
                let parts: Vec<&str> = other.split(',').collect();
                let bad = || OpfError::Model(format!("cannot parse direction '{other}'"));
                if parts.len() != 2 {
                    return Err(bad());
                }
                let a = parts[0].trim().parse::<i8>().map_err(|_| bad())?;
                let b = parts[1].trim().parse::<i8>().map_err(|_| bad())?;
                Self::new(a, b)
            }
        }
    }
}

/// Which flexible units may act, and how activation is modelled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ActivationContext {
    /// No flexible output at all.
    Off,
    /// Exactly these units are active (outputs anywhere in their boxes).
    FixedSubset { subset: BTreeSet<UnitId> },
    /// Continuous activation in `[0, 1]` with an optional cardinality row.
    Relaxed { cardinality_limit: Option<usize> },
}

impl ActivationContext {
    pub fn all_units(net: &Network) -> Self {
        Self::FixedSubset {
            subset: net.unit_ids().into_iter().collect(),
        }
    }

    pub fn subset(ids: impl IntoIterator<Item = UnitId>) -> Self {
        Self::FixedSubset {
            subset: ids.into_iter().collect(),
        }
    }
}

/// Per-unit modelling state used by the program builder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitState {
    Off,
    On,
    /// Activation variable in `[0, 1]`.
    Free,
}

/// Activation expressed per unit, as consumed by [`build_program`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationModel {
    pub states: Vec<UnitState>,
    pub cardinality_limit: Option<usize>,
}

impl ActivationModel {
    pub fn from_context(net: &Network, act: &ActivationContext) -> Result<Self, OpfError> {
        let n = net.flex_units.len();
        match act {
            ActivationContext::Off => Ok(Self {
                states: vec![UnitState::Off; n],
                cardinality_limit: None,
            }),
            ActivationContext::FixedSubset { subset } => {
                for id in subset {
                    if net.unit_index(*id).is_none() {
                        return Err(OpfError::UnknownUnit(*id));
                    }
                }
                Ok(Self {
                    states: net
                        .flex_units
                        .iter()
                        .map(|u| {
                            if subset.contains(&u.id) {
                                UnitState::On
                            } else {
                                UnitState::Off
                            }
                        })
                        .collect(),
                    cardinality_limit: None,
                })
            }
            ActivationContext::Relaxed { cardinality_limit } => {
                if let Some(m) = cardinality_limit {
                    if *m > n {
                        return Err(OpfError::Model(format!(
                            "cardinality limit {m} exceeds {n} units"
                        )));
                    }
                }
                Ok(Self {
                    states: vec![UnitState::Free; n],
                    cardinality_limit: *cardinality_limit,
                })
            }
        }
    }
}

/// Optional bounds on the interface exchange, kW / kVAr.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InterfaceWindow {
    pub p_lo: Option<f64>,
    pub p_hi: Option<f64>,
    pub q_lo: Option<f64>,
    pub q_hi: Option<f64>,
}

impl InterfaceWindow {
    pub fn q_band(lo: f64, hi: f64) -> Self {
        Self {
            q_lo: Some(lo),
            q_hi: Some(hi),
            ..Self::default()
        }
    }
}

/// What the program optimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Goal {
    Direction(ObjectiveDirection),
    /// Minimize `pi_p P + pi_q Q` with arbitrary weights.
    Linear {
        pi_p: f64,
        pi_q: f64,
    },
    /// Maximize `t >= 0` with `(P, Q) = origin + t (cos angle, sin angle)`, origin in kW / kVAr.
    Ray {
        origin: (f64, f64),
        angle: f64,
    },
}

impl Goal {
    /// Interface weights of a linear goal; `None` for rays.
    pub fn weights(&self) -> Option<(f64, f64)> {
        match *self {
            Goal::Direction(d) => Some((d.pi_p as f64, d.pi_q as f64)),
            Goal::Linear { pi_p, pi_q } => Some((pi_p, pi_q)),
            Goal::Ray { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    pub branch: usize,
    /// Sending-end active flow, kW.
    pub p: f64,
    /// Sending-end reactive flow, kVAr.
    pub q: f64,
    /// Squared current magnitude, p.u.
    pub l: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlexOutput {
    pub unit: UnitId,
    /// Effective injection, kW.
    pub p: f64,
    /// Effective injection, kVAr.
    pub q: f64,
    /// Activation value (0 or 1 except in relaxed solves).
    pub activation: f64,
}

impl FlexOutput {
    pub fn is_active(&self) -> bool {
        self.activation > 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    Voltage { bus: i64, voltage: f64 },
    LineLimit { branch: usize, loading: f64 },
}

/// A network state: interface exchange, voltages, flows and unit outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Net consumption at the reference bus, kW.
    pub interface_p: f64,
    /// Net consumption at the reference bus, kVAr.
    pub interface_q: f64,
    /// Voltage magnitudes by bus index, p.u.
    pub voltages: Vec<f64>,
    pub flows: Vec<BranchFlow>,
    pub flex_outputs: Vec<FlexOutput>,
    pub losses_p: f64,
    pub losses_q: f64,
    /// `max |P^2 + Q^2 - l w|` over branches, p.u.
    pub exactness_residual: f64,
    /// `pi_p P + pi_q Q` in p.u. (NaN for load-flow results).
    pub objective: f64,
    /// Objective of the solved program including regularization terms, p.u.
    pub model_objective: f64,
    /// Set when the exactness residual exceeds [`EXACTNESS_TOLERANCE`].
    pub inexact: bool,
    /// Limit violations (load flow only; optimal points satisfy limits).
    pub violations: Vec<Violation>,
    pub iterations: usize,
}

impl OperatingPoint {
    /// Net injections per bus index (generation plus flexible output), kW / kVAr.
    pub fn injections(&self, net: &Network) -> Vec<(f64, f64)> {
        let mut inj = vec![(0.0, 0.0); net.buses.len()];
        for f in &self.flex_outputs {
            if let Some(u) = net.unit_index(f.unit) {
                let b = net.bus_index(net.flex_units[u].bus).expect("validated");
                inj[b].0 += f.p;
                inj[b].1 += f.q;
            }
        }
        inj
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpfError {
    #[error("model error: {0}")]
    Model(String),
    #[error("unknown flexible unit id {0}")]
    UnknownUnit(UnitId),
    #[error("no operating point satisfies the interface window")]
    InfeasibleWindow,
    #[error("the program is unbounded")]
    Unbounded,
    #[error("solver did not converge in {iterations} iterations (residuals {primal:e}, {dual:e}, gap {gap:e})")]
    NotConverged {
        iterations: usize,
        primal: f64,
        dual: f64,
        gap: f64,
    },
    #[error(transparent)]
    Solver(#[from] ConicError),
}

/// Variable indices of a built program.
#[derive(Debug, Clone, PartialEq)]
pub struct OpfVars {
    pub w: Vec<usize>,
    /// Per branch id; `None` for out-of-service branches.
    pub p: Vec<Option<usize>>,
    pub q: Vec<Option<usize>>,
    pub l: Vec<Option<usize>>,
    /// Per generator; `None` for generators at the reference bus.
    pub gen_p: Vec<Option<usize>>,
    pub gen_q: Vec<Option<usize>>,
    pub units: Vec<Option<UnitVars>>,
    pub p_int: usize,
    pub q_int: usize,
    pub ray_t: Option<usize>,
    /// Index of each branch's current cone in the program.
    pub current_cone: Vec<Option<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVars {
    /// Output within the box.
    pub p: usize,
    pub q: usize,
    /// Effective injection `x * output` (equal to the output when always on).
    pub zp: usize,
    pub zq: usize,
    pub x: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpfProgram {
    pub program: ConicProgram,
    pub vars: OpfVars,
    pub goal: Goal,
}

/// Builds the conic program for a direction and activation context.
pub fn build_opf(
    net: &Network,
    dir: ObjectiveDirection,
    act: &ActivationContext,
    win: &InterfaceWindow,
) -> Result<OpfProgram, OpfError> {
    let model = ActivationModel::from_context(net, act)?;
    build_program(net, Goal::Direction(dir), &model, win)
}

/// Builds the conic program for an arbitrary goal and per-unit activation states.
pub fn build_program(
    net: &Network,
    goal: Goal,
    act: &ActivationModel,
    win: &InterfaceWindow,
) -> Result<OpfProgram, OpfError> {
    if act.states.len() != net.flex_units.len() {
        return Err(OpfError::Model(
            "activation states do not match the unit count".into(),
        ));
    }
    let topo = net.topology();
    let rf = topo.reference;
    if topo.children[rf].is_empty() {
        return Err(OpfError::Model(format!(
            "reference bus {} has no incident in-service branch",
            net.buses[rf].id
        )));
    }
    let pu = net.per_unit();
    let nb = net.buses.len();
    let inf = f64::INFINITY;
    let mut prog = ConicProgram::new();

    let w: Vec<usize> = (0..nb)
        .map(|i| {
            let b = &net.buses[i];
            let name = format!("w[{}]", b.id);
            if i == rf {
                let v = net.ref_voltage * net.ref_voltage;
                prog.add_named_var(v, v, 0.0, name)
            } else {
                prog.add_named_var(b.v_min * b.v_min, b.v_max * b.v_max, 0.0, name)
            }
        })
        .collect();

    let nbr = net.branches.len();
    let (mut pv, mut qv, mut lv) = (vec![None; nbr], vec![None; nbr], vec![None; nbr]);
    let mut current_cone = vec![None; nbr];
    let (dir_p, dir_q) = goal.weights().unwrap_or((0.0, 0.0));
    for k in net.in_service_branches() {
        let br = &net.branches[k];
        let (r, x) = (pu.impedance(br.r), pu.impedance(br.x));
        let reward = match goal {
            Goal::Ray { .. } => -(r + x.abs()),
            _ => dir_p * r + dir_q * x,
        };
        let loss_cost = if reward < 0.0 {
            -reward + LOSS_MARGIN * (r + x.abs())
        } else {
            0.0
        } + LOSS_FLOOR;
        pv[k] = Some(prog.add_named_var(-inf, inf, 0.0, format!("P[{k}]")));
        qv[k] = Some(prog.add_named_var(-inf, inf, 0.0, format!("Q[{k}]")));
        lv[k] = Some(prog.add_named_var(0.0, inf, loss_cost, format!("l[{k}]")));
    }

    let mut gen_p = vec![None; net.generators.len()];
    let mut gen_q = vec![None; net.generators.len()];
    let (mut int_plo, mut int_phi, mut int_qlo, mut int_qhi) = (-inf, inf, -inf, inf);
    let mut ref_gens = 0;
    let (mut rp_lo, mut rp_hi, mut rq_lo, mut rq_hi) = (0.0, 0.0, 0.0, 0.0);
    for (g, gen) in net.generators.iter().enumerate() {
        let b = net.bus_index(gen.bus).expect("validated");
        if b == rf {
            ref_gens += 1;
            rp_lo += pu.power(gen.p_min);
            rp_hi += pu.power(gen.p_max);
            rq_lo += pu.power(gen.q_min);
            rq_hi += pu.power(gen.q_max);
        } else {
            gen_p[g] = Some(prog.add_named_var(
                pu.power(gen.p_min),
                pu.power(gen.p_max),
                0.0,
                format!("pG[{g}]"),
            ));
            gen_q[g] = Some(prog.add_named_var(
                pu.power(gen.q_min),
                pu.power(gen.q_max),
                0.0,
                format!("qG[{g}]"),
            ));
        }
    }
    if ref_gens > 0 {
        int_plo = rp_lo;
        int_phi = rp_hi;
        int_qlo = rq_lo;
        int_qhi = rq_hi;
    }
    let tighten = |lo: &mut f64, hi: &mut f64, wlo: Option<f64>, whi: Option<f64>| {
        if let Some(v) = wlo {
            *lo = lo.max(pu.power(v));
        }
        if let Some(v) = whi {
            *hi = hi.min(pu.power(v));
        }
    };
    tighten(&mut int_plo, &mut int_phi, win.p_lo, win.p_hi);
    tighten(&mut int_qlo, &mut int_qhi, win.q_lo, win.q_hi);
    if int_plo > int_phi || int_qlo > int_qhi {
        return Err(OpfError::InfeasibleWindow);
    }
    let p_int = prog.add_named_var(int_plo, int_phi, dir_p, "P_int");
    let q_int = prog.add_named_var(int_qlo, int_qhi, dir_q, "Q_int");

    // Flexible units.
    let mut units = vec![None; net.flex_units.len()];
    let mut free_x = Vec::new();
    for (u, unit) in net.flex_units.iter().enumerate() {
        let (plo, phi, qlo, qhi) = (
            pu.power(unit.p_min),
            pu.power(unit.p_max),
            pu.power(unit.q_min),
            pu.power(unit.q_max),
        );
        match act.states[u] {
            UnitState::Off => {}
            UnitState::On => {
                let p = prog.add_named_var(plo, phi, 0.0, format!("pF[{}]", unit.id));
                let q = prog.add_named_var(qlo, qhi, 0.0, format!("qF[{}]", unit.id));
                units[u] = Some(UnitVars {
                    p,
                    q,
                    zp: p,
                    zq: q,
                    x: None,
                });
            }
            UnitState::Free => {
                let p = prog.add_named_var(plo, phi, 0.0, format!("pF[{}]", unit.id));
                let q = prog.add_named_var(qlo, qhi, 0.0, format!("qF[{}]", unit.id));
                let x = prog.add_named_var(0.0, 1.0, ACTIVATION_COST, format!("x[{}]", unit.id));
                let zp =
                    prog.add_named_var(plo.min(0.0), phi.max(0.0), 0.0, format!("zp[{}]", unit.id));
                let zq =
                    prog.add_named_var(qlo.min(0.0), qhi.max(0.0), 0.0, format!("zq[{}]", unit.id));
                for (z, o, lo, hi) in [(zp, p, plo, phi), (zq, q, qlo, qhi)] {
                    // z <= hi x, z >= lo x, z <= o - lo (1 - x), z >= o - hi (1 - x)
                    prog.add_row(vec![(z, 1.0), (x, -hi)], -inf, 0.0);
                    prog.add_row(vec![(z, 1.0), (x, -lo)], 0.0, inf);
                    prog.add_row(vec![(z, 1.0), (o, -1.0), (x, -lo)], -inf, -lo);
                    prog.add_row(vec![(z, 1.0), (o, -1.0), (x, -hi)], -hi, inf);
                }
                free_x.push(x);
                units[u] = Some(UnitVars {
                    p,
                    q,
                    zp,
                    zq,
                    x: Some(x),
                });
            }
        }
    }
    if let Some(m) = act.cardinality_limit {
        if !free_x.is_empty() {
            prog.add_row(free_x.iter().map(|&x| (x, 1.0)).collect(), -inf, m as f64);
        }
    }

    // Nodal injections collected per bus.
    let mut inj_p: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nb];
    let mut inj_q: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nb];
    for (u, uv) in units.iter().enumerate() {
        if let Some(uv) = uv {
            let b = net.bus_index(net.flex_units[u].bus).expect("validated");
            inj_p[b].push((uv.zp, 1.0));
            inj_q[b].push((uv.zq, 1.0));
        }
    }
    for (g, gen) in net.generators.iter().enumerate() {
        if let (Some(gp), Some(gq)) = (gen_p[g], gen_q[g]) {
            let b = net.bus_index(gen.bus).expect("validated");
            inj_p[b].push((gp, 1.0));
            inj_q[b].push((gq, 1.0));
        }
    }

    for j in 0..nb {
        let bus = &net.buses[j];
        let (dp, dq) = (pu.power(bus.demand_p), pu.power(bus.demand_q));
        match topo.parent[j] {
            None => {
                // P_int - sum(P_children) + inj = pD_ref
                let mut tp = vec![(p_int, 1.0)];
                let mut tq = vec![(q_int, 1.0)];
                for &c in &topo.children[j] {
                    tp.push((pv[c].expect("in service"), -1.0));
                    tq.push((qv[c].expect("in service"), -1.0));
                }
                tp.extend(inj_p[j].iter().copied());
                tq.extend(inj_q[j].iter().copied());
                prog.add_equality(tp, dp);
                prog.add_equality(tq, dq);
            }
            Some((k, i)) => {
                let br = &net.branches[k];
                let (r, x) = (pu.impedance(br.r), pu.impedance(br.x));
                let (pk, qk, lk) = (pv[k].unwrap(), qv[k].unwrap(), lv[k].unwrap());
                let mut tp = vec![(pk, 1.0), (lk, -r)];
                let mut tq = vec![(qk, 1.0), (lk, -x)];
                for &c in &topo.children[j] {
                    tp.push((pv[c].unwrap(), -1.0));
                    tq.push((qv[c].unwrap(), -1.0));
                }
                tp.extend(inj_p[j].iter().copied());
                tq.extend(inj_q[j].iter().copied());
                prog.add_equality(tp, dp);
                prog.add_equality(tq, dq);
                prog.add_equality(
                    vec![
                        (w[j], 1.0),
                        (w[i], -1.0),
                        (pk, 2.0 * r),
                        (qk, 2.0 * x),
                        (lk, -(r * r + x * x)),
                    ],
                    0.0,
                );
                current_cone[k] = Some(prog.add_cone(
                    lk.into(),
                    AffineExpr::scaled(w[i], 0.5),
                    vec![pk.into(), qk.into()],
                ));
                let rad = pu.power(br.s_max) * FRAC_1_SQRT_2;
                prog.add_cone(
                    AffineExpr::constant(rad),
                    AffineExpr::constant(rad),
                    vec![pk.into(), qk.into()],
                );
            }
        }
    }

    let mut ray_t = None;
    if let Goal::Ray { origin, angle } = goal {
        let t = prog.add_named_var(0.0, inf, -1.0, "t");
        prog.add_equality(vec![(p_int, 1.0), (t, -angle.cos())], pu.power(origin.0));
        prog.add_equality(vec![(q_int, 1.0), (t, -angle.sin())], pu.power(origin.1));
        ray_t = Some(t);
    }

    Ok(OpfProgram {
        program: prog,
        vars: OpfVars {
            w,
            p: pv,
            q: qv,
            l: lv,
            gen_p,
            gen_q,
            units,
            p_int,
            q_int,
            ray_t,
            current_cone,
        },
        goal,
    })
}

/// Solver settings used for every OPF solve.
/// Residual level at which a stalled solve is still accepted.
const REDUCED_ACCURACY: f64 = 1e-8;

pub fn opf_solver_settings() -> SolverSettings {
    let mut s = SolverSettings::default();
    // Exactness is judged from cone slacks, so the gap is driven below the
    // feasibility tolerance.
    s.tol.gap_abs = 1e-10;
    s.tol.gap_rel = 1e-10;
    s
}

/// Solves the program and maps the optimum back to an operating point.
pub fn solve_program(
    net: &Network,
    built: &OpfProgram,
) -> Result<(OperatingPoint, ConicSolution), OpfError> {
    let sol = conic::solve(&built.program, &opf_solver_settings())?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(OpfError::InfeasibleWindow),
        SolveStatus::Unbounded => return Err(OpfError::Unbounded),
        SolveStatus::IterationLimit
            if sol
                .residuals
                .primal
                .max(sol.residuals.dual)
                .max(sol.residuals.gap)
                <= REDUCED_ACCURACY =>
        {
            log::debug!(
                "accepting iterate at reduced accuracy after {} iterations",
                sol.iterations
            );
        }
        SolveStatus::IterationLimit => {
            return Err(OpfError::NotConverged {
                iterations: sol.iterations,
                primal: sol.residuals.primal,
                dual: sol.residuals.dual,
                gap: sol.residuals.gap,
            })
        }
    }
    let op = extract_point(net, built, &sol);
    if op.inexact {
        log::debug!(
            "relaxation inexact on {}: residual {:e} p.u.",
            net.name,
            op.exactness_residual
        );
    }
    Ok((op, sol))
}

/// Builds and solves for a direction and activation context.
pub fn solve_opf(
    net: &Network,
    dir: ObjectiveDirection,
    act: &ActivationContext,
    win: &InterfaceWindow,
) -> Result<OperatingPoint, OpfError> {
    let built = build_opf(net, dir, act, win)?;
    Ok(solve_program_exact(net, &built)?.0)
}

/// The state with every flexible unit at zero output (or switched off).
pub fn initial_operating_point(net: &Network) -> Result<OperatingPoint, OpfError> {
    solve_opf(
        net,
        ObjectiveDirection::MIN_P,
        &ActivationContext::Off,
        &InterfaceWindow::default(),
    )
}

fn extract_point(net: &Network, built: &OpfProgram, sol: &ConicSolution) -> OperatingPoint {
    let pu = net.per_unit();
    let x = &sol.x;
    let v = &built.vars;
    let topo = net.topology();
    let mut flows = Vec::new();
    let mut residual = 0.0f64;
    let (mut lp, mut lq) = (0.0, 0.0);
    for k in net.in_service_branches() {
        let (pk, qk, lk) = (x[v.p[k].unwrap()], x[v.q[k].unwrap()], x[v.l[k].unwrap()]);
        let (i, _) = topo.oriented[k].expect("oriented");
        let wi = x[v.w[i]];
        residual = residual.max((pk * pk + qk * qk - lk * wi).abs());
        lp += pu.impedance(net.branches[k].r) * lk;
        lq += pu.impedance(net.branches[k].x) * lk;
        flows.push(BranchFlow {
            branch: k,
            p: pu.to_kw(pk),
            q: pu.to_kw(qk),
            l: lk,
        });
    }
    let flex_outputs = net
        .flex_units
        .iter()
        .zip(&v.units)
        .map(|(u, uv)| match uv {
            None => FlexOutput {
                unit: u.id,
                p: 0.0,
                q: 0.0,
                activation: 0.0,
            },
            Some(uv) => FlexOutput {
                unit: u.id,
                p: pu.to_kw(x[uv.zp]),
                q: pu.to_kw(x[uv.zq]),
                activation: uv.x.map_or(1.0, |xi| x[xi]),
            },
        })
        .collect();
    let objective = match built.goal.weights() {
        Some((pi_p, pi_q)) => pi_p * x[v.p_int] + pi_q * x[v.q_int],
        None => v.ray_t.map_or(f64::NAN, |t| x[t]),
    };
    OperatingPoint {
        interface_p: pu.to_kw(x[v.p_int]),
        interface_q: pu.to_kw(x[v.q_int]),
        voltages: v.w.iter().map(|&wi| x[wi].max(0.0).sqrt()).collect(),
        flows,
        flex_outputs,
        losses_p: pu.to_kw(lp),
        losses_q: pu.to_kw(lq),
        exactness_residual: residual,
        objective,
        model_objective: sol.objective_value,
        inexact: residual > EXACTNESS_TOLERANCE,
        violations: Vec::new(),
        iterations: sol.iterations,
    }
}

/// Re-runs the load flow at the unit outputs of `op`.
pub fn verify_with_sweep(net: &Network, op: &OperatingPoint) -> Result<OperatingPoint, SweepError> {
    let mut res = sweep_power_flow(net, &op.injections(net))?;
    res.flex_outputs = op.flex_outputs.clone();
    Ok(res)
}
