//! Flexibility-area boundary tracing at the interface.
//!
//! Three estimators share one probe: an optimization of the interface
//! exchange under an activation context. Fixed subsets (and "off") solve the
//! continuous program directly; relaxed contexts with a cardinality limit go
//! through branch-and-bound, so the unit choice may differ per boundary point.

use crate::distflow::{
    build_program, initial_operating_point, solve_program_exact, sweep_power_flow,
    verify_with_sweep, ActivationContext, ActivationModel, Goal, InterfaceWindow,
    ObjectiveDirection, OperatingPoint, OpfError, EXACTNESS_TOLERANCE,
};
use crate::geometry::{convex_hull, Point, Polygon};
use crate::grid::Network;
use crate::misocp::{solve_misocp_goal, MisocpError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write as _;
use thiserror::Error;

/// Interface mismatch above which a traced point fails sweep verification, p.u.
pub const SWEEP_MISMATCH_TOL: f64 = 1e-6;
/// Padding of each ε-band against round-off at the range ends, kVAr.
const BAND_PAD: f64 = 1e-6;
/// Weight of the secondary objective that pushes each band's optimum
/// towards the outer end of its Q range (kW per kVAr).
const OUTWARD_TILT: f64 = 1e-2;
/// Q ranges narrower than this are traced without a window, kVAr.
const FLAT_RANGE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("the network admits no operating point for this context: {0}")]
    Infeasible(String),
    #[error("every ε-interval was empty although the reference point exists")]
    AllIntervalsEmpty,
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error(transparent)]
    Misocp(MisocpError),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl From<MisocpError> for TraceError {
    fn from(e: MisocpError) -> Self {
        match e {
            MisocpError::Opf(o) => TraceError::Opf(o),
            e => TraceError::Misocp(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceMethod {
    Epsilon,
    Radial,
    MonteCarloHull,
}

impl TraceMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceMethod::Epsilon => "epsilon",
            TraceMethod::Radial => "radial",
            TraceMethod::MonteCarloHull => "monte-carlo-hull",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointFlag {
    /// Relaxation residual above tolerance.
    Inexact,
    /// The sweep disagreed with the optimum or flagged a limit.
    SweepMismatch,
    /// The sweep did not converge at this point's injections.
    SweepFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    MaxP,
    MinP,
    Ray,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    /// kW
    pub p: f64,
    /// kVAr
    pub q: f64,
    /// ε-interval or ray index.
    pub interval: usize,
    pub side: Side,
    pub exactness_residual: f64,
    /// Largest interface difference to the sweep, p.u.
    pub sweep_mismatch: f64,
    pub flags: Vec<PointFlag>,
    /// Units active at this point.
    pub active_units: Vec<i64>,
}

impl BoundaryPoint {
    pub fn point(&self) -> Point {
        Point::new(self.p, self.q)
    }

    pub fn is_clean(&self) -> bool {
        self.flags.is_empty()
    }
}

/// An ε-interval (or ray) side that produced no point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub interval: usize,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlexArea {
    /// Counterclockwise boundary points.
    pub boundary: Vec<BoundaryPoint>,
    pub context: ActivationContext,
    pub method: TraceMethod,
    pub k: usize,
    /// Interface exchange with all units off, kW / kVAr.
    pub reference_point: (f64, f64),
    pub gaps: Vec<Gap>,
}

impl FlexArea {
    pub fn points(&self) -> Vec<Point> {
        self.boundary.iter().map(BoundaryPoint::point).collect()
    }

    /// The boundary as a (repaired) polygon.
    pub fn polygon(&self) -> Polygon {
        let pts = self.points();
        if pts.is_empty() {
            return Polygon::point(Point::new(self.reference_point.0, self.reference_point.1));
        }
        Polygon::new(pts)
    }

    pub fn hull(&self) -> Polygon {
        let mut pts = self.points();
        if pts.is_empty() {
            pts.push(Point::new(self.reference_point.0, self.reference_point.1));
        }
        convex_hull(&pts)
    }

    pub fn flagged(&self) -> impl Iterator<Item = &BoundaryPoint> {
        self.boundary.iter().filter(|b| !b.is_clean())
    }

    /// True when the reference point is inside or on the hull of the boundary.
    pub fn reference_inside(&self, tol: f64) -> bool {
        let r = Point::new(self.reference_point.0, self.reference_point.1);
        let h = self.hull();
        if h.is_degenerate() {
            let d = self.points().iter().map(|p| p.dist(r)).fold(0.0, f64::max);
            let span = h.vertices().iter().map(|v| v.norm()).fold(1.0, f64::max);
            return d <= tol * span || h.vertices().len() == 2;
        }
        h.contains_point(r, tol)
    }

    /// Point table: `method,interval,P_kW,Q_kVAr,flags`.
    pub fn to_table(&self) -> String {
        let mut s = String::from("method,interval,P_kW,Q_kVAr,flags\n");
        for b in &self.boundary {
            let flags: Vec<&str> = b
                .flags
                .iter()
                .map(|f| match f {
                    PointFlag::Inexact => "inexact",
                    PointFlag::SweepMismatch => "sweep-mismatch",
                    PointFlag::SweepFailed => "sweep-failed",
                })
                .collect();
            let _ = writeln!(
                s,
                "{},{},{:.9},{:.9},{}",
                self.method.as_str(),
                b.interval,
                b.p,
                b.q,
                flags.join(";")
            );
        }
        for g in &self.gaps {
            let _ = writeln!(
                s,
                "{},{},,,interval-empty",
                self.method.as_str(),
                g.interval
            );
        }
        s
    }
}

/// Execution options for tracing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceOptions {
    pub workers: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

impl TraceOptions {
    pub(crate) fn run<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R, TraceError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()
            .map_err(|e| TraceError::Pool(e.to_string()))?;
        Ok(pool.install(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremes {
    pub q_min: f64,
    pub q_max: f64,
    pub p_min: f64,
    pub p_max: f64,
}

/// One optimization of the interface under an activation context.
pub fn probe(
    net: &Network,
    act: &ActivationContext,
    goal: Goal,
    win: &InterfaceWindow,
) -> Result<Option<OperatingPoint>, TraceError> {
    if inert(net, act) {
        // Nothing can move: the reference point is the whole area.
        let r = reference(net)?;
        let inside = |v: f64, lo: Option<f64>, hi: Option<f64>| {
            lo.is_none_or(|lo| v >= lo - BAND_PAD) && hi.is_none_or(|hi| v <= hi + BAND_PAD)
        };
        let ok =
            inside(r.interface_p, win.p_lo, win.p_hi) && inside(r.interface_q, win.q_lo, win.q_hi);
        return Ok(ok.then_some(r));
    }
    match act {
        ActivationContext::Relaxed { cardinality_limit } => {
            let limit = cardinality_limit.unwrap_or(net.flex_units.len());
            match solve_misocp_goal(net, goal, limit, win, &BTreeSet::new(), &BTreeSet::new()) {
                Ok(sol) => Ok(Some(sol.point)),
                Err(MisocpError::Infeasible)
                | Err(MisocpError::Opf(OpfError::InfeasibleWindow)) => Ok(None),
                Err(e) => Err(e.into()),
            }
        }
        _ => {
            let model = ActivationModel::from_context(net, act)?;
            let built = build_program(net, goal, &model, win)?;
            match solve_program_exact(net, &built) {
                Ok((op, _)) => Ok(Some(op)),
                Err(OpfError::InfeasibleWindow) => Ok(None),
                Err(e) => Err(e.into()),
            }
        }
    }
}

fn inert(net: &Network, act: &ActivationContext) -> bool {
    match act {
        ActivationContext::Off => true,
        ActivationContext::FixedSubset { subset } => subset.is_empty(),
        ActivationContext::Relaxed { cardinality_limit } => {
            net.flex_units.is_empty() || *cardinality_limit == Some(0)
        }
    }
}

fn boundary_point(
    net: &Network,
    op: &OperatingPoint,
    interval: usize,
    side: Side,
) -> BoundaryPoint {
    let pu = net.per_unit();
    let mut flags = Vec::new();
    if op.inexact || op.exactness_residual > EXACTNESS_TOLERANCE {
        flags.push(PointFlag::Inexact);
    }
    let sweep_mismatch = match verify_with_sweep(net, op) {
        Ok(sw) => {
            let m = pu
                .power((sw.interface_p - op.interface_p).abs())
                .max(pu.power((sw.interface_q - op.interface_q).abs()));
            if m > SWEEP_MISMATCH_TOL || !sw.violations.is_empty() {
                flags.push(PointFlag::SweepMismatch);
            }
            m
        }
        Err(_) => {
            flags.push(PointFlag::SweepFailed);
            f64::INFINITY
        }
    };
    BoundaryPoint {
        p: op.interface_p,
        q: op.interface_q,
        interval,
        side,
        exactness_residual: op.exactness_residual,
        sweep_mismatch,
        flags,
        active_units: op
            .flex_outputs
            .iter()
            .filter(|f| f.is_active())
            .map(|f| f.unit)
            .collect(),
    }
}

fn reference(net: &Network) -> Result<OperatingPoint, TraceError> {
    initial_operating_point(net).map_err(|e| match e {
        OpfError::InfeasibleWindow => TraceError::Infeasible("initial operating point".into()),
        e => e.into(),
    })
}

/// The four extreme interface values reachable under `act`.
pub fn extreme_points(net: &Network, act: &ActivationContext) -> Result<Extremes, TraceError> {
    extreme_points_with(net, act, &TraceOptions::default())
}

pub fn extreme_points_with(
    net: &Network,
    act: &ActivationContext,
    opts: &TraceOptions,
) -> Result<Extremes, TraceError> {
    opts.run(|| extreme_points_in(net, act))?
}

fn extreme_points_in(net: &Network, act: &ActivationContext) -> Result<Extremes, TraceError> {
    ActivationModel::from_context(net, act)?;
    let dirs = [
        ObjectiveDirection::MIN_Q,
        ObjectiveDirection::MAX_Q,
        ObjectiveDirection::MIN_P,
        ObjectiveDirection::MAX_P,
    ];
    let res: Vec<Result<Option<OperatingPoint>, TraceError>> = dirs
        .par_iter()
        .map(|&d| probe(net, act, Goal::Direction(d), &InterfaceWindow::default()))
        .collect();
    let mut v = Vec::with_capacity(4);
    for r in res {
        v.push(r?.ok_or_else(|| TraceError::Infeasible("extreme point probe".into()))?);
    }
    Ok(Extremes {
        q_min: v[0].interface_q,
        q_max: v[1].interface_q.max(v[0].interface_q),
        p_min: v[2].interface_p,
        p_max: v[3].interface_p.max(v[2].interface_p),
    })
}

/// ε-constraint trace with `k` equal Q-intervals (2k boundary points).
pub fn trace_epsilon(
    net: &Network,
    act: &ActivationContext,
    k: usize,
) -> Result<FlexArea, TraceError> {
    trace_epsilon_with(net, act, k, &TraceOptions::default())
}

pub fn trace_epsilon_with(
    net: &Network,
    act: &ActivationContext,
    k: usize,
    opts: &TraceOptions,
) -> Result<FlexArea, TraceError> {
    opts.run(|| trace_epsilon_in(net, act, k))?
}

/// [`trace_epsilon`] on the current worker pool.
pub(crate) fn trace_epsilon_in(
    net: &Network,
    act: &ActivationContext,
    k: usize,
) -> Result<FlexArea, TraceError> {
    if k < 1 {
        return Err(TraceError::InvalidArgument("k must be at least 1".into()));
    }
    let reference = reference(net)?;
    let ext = extreme_points_in(net, act)?;
    let width = (ext.q_max - ext.q_min) / k as f64;
    let jobs: Vec<(usize, Side)> = (0..k)
        .flat_map(|i| [(i, Side::MaxP), (i, Side::MinP)])
        .collect();
    let results: Vec<Result<Option<OperatingPoint>, TraceError>> = jobs
        .par_iter()
        .map(|&(i, side)| {
            let lo = ext.q_min + width * i as f64;
            let hi = if i + 1 == k {
                ext.q_max
            } else {
                ext.q_min + width * (i + 1) as f64
            };
            let win = if ext.q_max - ext.q_min < FLAT_RANGE {
                InterfaceWindow::default()
            } else {
                InterfaceWindow::q_band(lo - BAND_PAD, hi + BAND_PAD)
            };
            let pi_p = if side == Side::MaxP { -1.0 } else { 1.0 };
            let outward = (lo + hi) - (ext.q_min + ext.q_max);
            let pi_q = if outward.abs() < 1e-9 * width.max(1.0) {
                0.0
            } else {
                -OUTWARD_TILT * outward.signum()
            };
            probe(net, act, Goal::Linear { pi_p, pi_q }, &win)
        })
        .collect();
    let mut max_side = Vec::with_capacity(k);
    let mut min_side = Vec::with_capacity(k);
    let mut gaps = Vec::new();
    for (&(i, side), r) in jobs.iter().zip(results) {
        match r? {
            Some(op) => {
                let bp = boundary_point(net, &op, i, side);
                if side == Side::MaxP {
                    max_side.push(bp);
                } else {
                    min_side.push(bp);
                }
            }
            None => gaps.push(Gap { interval: i, side }),
        }
    }
    if max_side.is_empty() && min_side.is_empty() {
        return Err(TraceError::AllIntervalsEmpty);
    }
    min_side.reverse();
    max_side.extend(min_side);
    Ok(FlexArea {
        boundary: max_side,
        context: act.clone(),
        method: TraceMethod::Epsilon,
        k,
        reference_point: (reference.interface_p, reference.interface_q),
        gaps,
    })
}

/// Radial reconstruction along `2k` equally spaced directions from the reference point.
pub fn trace_radial(
    net: &Network,
    act: &ActivationContext,
    k: usize,
) -> Result<FlexArea, TraceError> {
    trace_radial_with(net, act, k, &TraceOptions::default())
}

pub fn trace_radial_with(
    net: &Network,
    act: &ActivationContext,
    k: usize,
    opts: &TraceOptions,
) -> Result<FlexArea, TraceError> {
    opts.run(|| trace_radial_in(net, act, k))?
}

fn trace_radial_in(
    net: &Network,
    act: &ActivationContext,
    k: usize,
) -> Result<FlexArea, TraceError> {
    if k < 2 {
        return Err(TraceError::InvalidArgument("k must be at least 2".into()));
    }
    ActivationModel::from_context(net, act)?;
    let reference = reference(net)?;
    let origin = (reference.interface_p, reference.interface_q);
    let results: Vec<Result<Option<OperatingPoint>, TraceError>> = (0..2 * k)
        .into_par_iter()
        .map(|j| {
            let angle = j as f64 * std::f64::consts::PI / k as f64;
            probe(
                net,
                act,
                Goal::Ray { origin, angle },
                &InterfaceWindow::default(),
            )
        })
        .collect();
    let mut boundary = Vec::new();
    let mut gaps = Vec::new();
    for (j, r) in results.into_iter().enumerate() {
        match r? {
            Some(op) => boundary.push(boundary_point(net, &op, j, Side::Ray)),
            None => gaps.push(Gap {
                interval: j,
                side: Side::Ray,
            }),
        }
    }
    Ok(FlexArea {
        boundary,
        context: act.clone(),
        method: TraceMethod::Radial,
        k,
        reference_point: origin,
        gaps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub p: f64,
    pub q: f64,
    pub feasible: bool,
}

/// Units that act in a Monte Carlo sample under `act`.
fn sample_units(net: &Network, act: &ActivationContext, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match act {
        ActivationContext::Off => Vec::new(),
        ActivationContext::FixedSubset { subset } => (0..net.flex_units.len())
            .filter(|&u| subset.contains(&net.flex_units[u].id))
            .collect(),
        ActivationContext::Relaxed { cardinality_limit } => {
            let n = net.flex_units.len();
            let m = cardinality_limit.unwrap_or(n).min(n);
            let mut v = rand::seq::index::sample(rng, n, m).into_vec();
            v.sort_unstable();
            v
        }
    }
}

/// Uniform samples of the active units' boxes, classified by the sweep.
pub fn monte_carlo_cloud(
    net: &Network,
    act: &ActivationContext,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Sample>, TraceError> {
    monte_carlo_cloud_with(net, act, n_samples, seed, &TraceOptions::default())
}

pub fn monte_carlo_cloud_with(
    net: &Network,
    act: &ActivationContext,
    n_samples: usize,
    seed: u64,
    opts: &TraceOptions,
) -> Result<Vec<Sample>, TraceError> {
    if n_samples < 1 {
        return Err(TraceError::InvalidArgument(
            "n_samples must be at least 1".into(),
        ));
    }
    ActivationModel::from_context(net, act)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = net.buses.len();
    let draws: Vec<Vec<(f64, f64)>> = (0..n_samples)
        .map(|_| {
            let mut inj = vec![(0.0, 0.0); nb];
            for u in sample_units(net, act, &mut rng) {
                let unit = &net.flex_units[u];
                let p = if unit.p_max > unit.p_min {
                    rng.gen_range(unit.p_min..=unit.p_max)
                } else {
                    unit.p_min
                };
                let q = if unit.q_max > unit.q_min {
                    rng.gen_range(unit.q_min..=unit.q_max)
                } else {
                    unit.q_min
                };
                let b = net.bus_index(unit.bus).expect("validated");
                inj[b].0 += p;
                inj[b].1 += q;
            }
            inj
        })
        .collect();
    opts.run(|| {
        draws
            .par_iter()
            .map(|inj| match sweep_power_flow(net, inj) {
                Ok(sw) => Sample {
                    p: sw.interface_p,
                    q: sw.interface_q,
                    feasible: sw.violations.is_empty(),
                },
                Err(_) => Sample {
                    p: f64::NAN,
                    q: f64::NAN,
                    feasible: false,
                },
            })
            .collect()
    })
}

/// Convex hull of the feasible samples as a flexibility area.
pub fn monte_carlo_area(
    net: &Network,
    act: &ActivationContext,
    n_samples: usize,
    seed: u64,
) -> Result<FlexArea, TraceError> {
    let reference = reference(net)?;
    let samples = monte_carlo_cloud(net, act, n_samples, seed)?;
    let pts: Vec<Point> = samples
        .iter()
        .filter(|s| s.feasible)
        .map(|s| Point::new(s.p, s.q))
        .collect();
    let hull = convex_hull(&pts);
    Ok(FlexArea {
        boundary: hull
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, v)| BoundaryPoint {
                p: v.x,
                q: v.y,
                interval: i,
                side: Side::Sample,
                exactness_residual: 0.0,
                sweep_mismatch: 0.0,
                flags: Vec::new(),
                active_units: Vec::new(),
            })
            .collect(),
        context: act.clone(),
        method: TraceMethod::MonteCarloHull,
        k: n_samples,
        reference_point: (reference.interface_p, reference.interface_q),
        gaps: Vec::new(),
    })
}

#[cfg(test)]
mod tests;
