//! Branch-and-bound over unit activation binaries.
//!
//! Every node solves the continuous relaxation of the DistFlow program with
//! its fixed units switched on or off and the remaining activations relaxed
//! to `[0, 1]`. Nodes are explored best-first on their relaxation bound.
//! A leaf is valued by re-solving its subset with fixed activation, so
//! incumbents always carry a clean operating point.
//!
//! Values compared here are model objectives (including the loss and
//! activation regularization) so that bounds and leaves are consistent. The
//! returned operating point is the refined exact solution of the winning subset.

use crate::distflow::{
    build_program, solve_opf, solve_program, ActivationContext, ActivationModel, Goal,
    InterfaceWindow, ObjectiveDirection, OperatingPoint, OpfError, UnitState, ACTIVATION_COST,
};
use crate::grid::{Network, UnitId};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use std::io::Write;
use thiserror::Error;

/// Distance from the nearest integer below which an activation counts as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;
/// Nodes whose bound is within this of the incumbent are pruned, p.u.
pub const ABSOLUTE_GAP: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MisocpError {
    #[error("unit {0} is both forced on and forced off")]
    ForcedConflict(UnitId),
    #[error("{forced} units forced on exceed the cardinality limit {limit}")]
    TooManyForced { forced: usize, limit: usize },
    #[error("cardinality limit {limit} exceeds the {units} available units")]
    LimitTooLarge { limit: usize, units: usize },
    #[error("no activation satisfies the interface window")]
    Infeasible,
    #[error(transparent)]
    Opf(#[from] OpfError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub fixed_zero: BTreeSet<UnitId>,
    pub fixed_one: BTreeSet<UnitId>,
    pub relaxation_bound: f64,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NodeDecision {
    /// Branched on the unit whose relaxed activation was `value`.
    Branched {
        unit: UnitId,
        value: f64,
    },
    /// Bound not better than the incumbent.
    Pruned {
        incumbent: f64,
    },
    Infeasible,
    /// Relaxation was integral; the subset was valued as a leaf.
    Integral {
        value: f64,
        improved: bool,
    },
    /// Incumbent obtained by rounding the root relaxation.
    Rounded {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLogEntry {
    pub node: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub bound: Option<f64>,
    pub decision: NodeDecision,
}

impl fmt::Display for NodeLogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parent = self.parent.map_or("-".to_string(), |p| p.to_string());
        let bound = self.bound.map_or("-".to_string(), |b| format!("{b:.12e}"));
        let decision = match &self.decision {
            NodeDecision::Branched { unit, value } => format!("branch unit={unit} x={value:.6}"),
            NodeDecision::Pruned { incumbent } => format!("prune incumbent={incumbent:.12e}"),
            NodeDecision::Infeasible => "infeasible".to_string(),
            NodeDecision::Integral { value, improved } => {
                format!("integral value={value:.12e} improved={improved}")
            }
            NodeDecision::Rounded { value } => format!("rounded value={value:.12e}"),
        };
        write!(
            f,
            "{} {} {} {} {}",
            self.node, parent, self.depth, bound, decision
        )
    }
}

/// Writes one line per node: id, parent, depth, bound, decision.
pub fn write_node_log(log: &[NodeLogEntry], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "# node parent depth bound decision")?;
    for e in log {
        writeln!(out, "{e}")?;
    }
    Ok(())
}

/// Checks that every pruned node's bound was no better than the incumbent it
/// was pruned against (within the gap). Returns the offending node ids.
pub fn audit_node_log(log: &[NodeLogEntry]) -> Vec<usize> {
    log.iter()
        .filter_map(|e| match (&e.decision, e.bound) {
            (NodeDecision::Pruned { incumbent }, Some(b)) if b < incumbent - ABSOLUTE_GAP => {
                Some(e.node)
            }
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MisocpSolution {
    pub activation: BTreeSet<UnitId>,
    /// Operating point of the winning subset.
    pub point: OperatingPoint,
    /// Model objective of the winning subset, including activation cost, p.u.
    pub value: f64,
    pub nodes: usize,
    pub log: Vec<NodeLogEntry>,
}

/// Optimal activation of at most `cardinality_limit` units for a direction.
pub fn solve_misocp(
    net: &Network,
    dir: ObjectiveDirection,
    cardinality_limit: usize,
    win: &InterfaceWindow,
    forced_on: &BTreeSet<UnitId>,
    forced_off: &BTreeSet<UnitId>,
) -> Result<MisocpSolution, MisocpError> {
    solve_misocp_goal(
        net,
        Goal::Direction(dir),
        cardinality_limit,
        win,
        forced_on,
        forced_off,
    )
}

/// Inputs shared by every node of one search.
struct Search<'a> {
    net: &'a Network,
    goal: Goal,
    limit: usize,
    win: &'a InterfaceWindow,
}

enum Relaxation {
    Infeasible,
    Solved { bound: f64, x: Vec<(UnitId, f64)> },
}

impl Search<'_> {
    fn states(
        &self,
        on: &BTreeSet<UnitId>,
        off: &BTreeSet<UnitId>,
        relax_rest: bool,
    ) -> ActivationModel {
        let states = self
            .net
            .flex_units
            .iter()
            .map(|u| {
                if on.contains(&u.id) {
                    UnitState::On
                } else if off.contains(&u.id) || !relax_rest {
                    UnitState::Off
                } else {
                    UnitState::Free
                }
            })
            .collect();
        ActivationModel {
            states,
            cardinality_limit: Some(self.limit - on.len()),
        }
    }

    fn relax(
        &self,
        on: &BTreeSet<UnitId>,
        off: &BTreeSet<UnitId>,
    ) -> Result<Relaxation, MisocpError> {
        let built = build_program(self.net, self.goal, &self.states(on, off, true), self.win)?;
        match solve_program(self.net, &built) {
            Ok((op, _)) => {
                let x = op
                    .flex_outputs
                    .iter()
                    .zip(&built.vars.units)
                    .filter_map(|(f, uv)| uv.and_then(|uv| uv.x).map(|_| (f.unit, f.activation)))
                    .collect();
                Ok(Relaxation::Solved {
                    bound: op.model_objective + ACTIVATION_COST * on.len() as f64,
                    x,
                })
            }
            Err(OpfError::InfeasibleWindow) => Ok(Relaxation::Infeasible),
            Err(e) => Err(e.into()),
        }
    }

    /// Model value of a fixed subset, or `None` when infeasible.
    fn leaf(&self, subset: &BTreeSet<UnitId>) -> Result<Option<f64>, MisocpError> {
        let built = build_program(
            self.net,
            self.goal,
            &self.states(subset, &BTreeSet::new(), false),
            self.win,
        )?;
        match solve_program(self.net, &built) {
            Ok((op, _)) => Ok(Some(
                op.model_objective + ACTIVATION_COST * subset.len() as f64,
            )),
            Err(OpfError::InfeasibleWindow) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

/// Heap entry ordered so the smallest bound (then the smallest id) pops first.
struct Open {
    node: BranchNode,
    x: Vec<(UnitId, f64)>,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .node
            .relaxation_bound
            .total_cmp(&self.node.relaxation_bound)
            .then_with(|| other.node.id.cmp(&self.node.id))
    }
}

fn check_inputs(
    net: &Network,
    limit: usize,
    forced_on: &BTreeSet<UnitId>,
    forced_off: &BTreeSet<UnitId>,
) -> Result<(), MisocpError> {
    for id in forced_on.iter().chain(forced_off) {
        if net.unit_index(*id).is_none() {
            return Err(OpfError::UnknownUnit(*id).into());
        }
    }
    if let Some(id) = forced_on.intersection(forced_off).next() {
        return Err(MisocpError::ForcedConflict(*id));
    }
    if limit > net.flex_units.len() {
        return Err(MisocpError::LimitTooLarge {
            limit,
            units: net.flex_units.len(),
        });
    }
    if forced_on.len() > limit {
        return Err(MisocpError::TooManyForced {
            forced: forced_on.len(),
            limit,
        });
    }
    Ok(())
}

/// Branch-and-bound for an arbitrary goal.
pub fn solve_misocp_goal(
    net: &Network,
    goal: Goal,
    cardinality_limit: usize,
    win: &InterfaceWindow,
    forced_on: &BTreeSet<UnitId>,
    forced_off: &BTreeSet<UnitId>,
) -> Result<MisocpSolution, MisocpError> {
    check_inputs(net, cardinality_limit, forced_on, forced_off)?;
    let search = Search {
        net,
        goal,
        limit: cardinality_limit,
        win,
    };
    let mut log = Vec::new();
    let mut incumbent: Option<(f64, BTreeSet<UnitId>)> = None;
    let mut next_id = 1;

    let root = match search.relax(forced_on, forced_off)? {
        Relaxation::Infeasible => {
            log.push(NodeLogEntry {
                node: 0,
                parent: None,
                depth: 0,
                bound: None,
                decision: NodeDecision::Infeasible,
            });
            return Err(MisocpError::Infeasible);
        }
        Relaxation::Solved { bound, x } => {
            // Seed: keep the largest activations at or above one half.
            let mut ranked: Vec<&(UnitId, f64)> = x.iter().filter(|(_, v)| *v >= 0.5).collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut seed = forced_on.clone();
            seed.extend(
                ranked
                    .iter()
                    .take(cardinality_limit - forced_on.len())
                    .map(|(id, _)| *id),
            );
            if let Some(value) = search.leaf(&seed)? {
                log.push(NodeLogEntry {
                    node: 0,
                    parent: None,
                    depth: 0,
                    bound: Some(bound),
                    decision: NodeDecision::Rounded { value },
                });
                incumbent = Some((value, seed));
            }
            (bound, x)
        }
    };

    let mut open = BinaryHeap::new();
    open.push(Open {
        node: BranchNode {
            id: 0,
            parent: None,
            fixed_zero: forced_off.clone(),
            fixed_one: forced_on.clone(),
            relaxation_bound: root.0,
            depth: 0,
        },
        x: root.1,
    });

    while let Some(Open { node, x }) = open.pop() {
        let entry = |decision| NodeLogEntry {
            node: node.id,
            parent: node.parent,
            depth: node.depth,
            bound: Some(node.relaxation_bound),
            decision,
        };
        if let Some((inc, _)) = &incumbent {
            if node.relaxation_bound >= inc - ABSOLUTE_GAP {
                log.push(entry(NodeDecision::Pruned { incumbent: *inc }));
                continue;
            }
        }
        let fractional = x
            .iter()
            .filter(|(id, _)| !node.fixed_one.contains(id) && !node.fixed_zero.contains(id))
            .filter(|(_, v)| (v - v.round()).abs() > INTEGRALITY_TOL)
            .min_by(|a, b| {
                let fa = (a.1 - 0.5).abs();
                let fb = (b.1 - 0.5).abs();
                fa.total_cmp(&fb)
                    .then_with(|| box_area(net, b.0).total_cmp(&box_area(net, a.0)))
                    .then(a.0.cmp(&b.0))
            })
            .copied();

        match fractional {
            None => {
                let mut subset = node.fixed_one.clone();
                subset.extend(x.iter().filter(|(_, v)| *v > 0.5).map(|(id, _)| *id));
                match search.leaf(&subset)? {
                    None => log.push(entry(NodeDecision::Infeasible)),
                    Some(value) => {
                        let improved = incumbent.as_ref().is_none_or(|(inc, s)| {
                            value < *inc || (value == *inc && better_tie(&subset, s))
                        });
                        if improved {
                            incumbent = Some((value, subset));
                        }
                        log.push(entry(NodeDecision::Integral { value, improved }));
                    }
                }
            }
            Some((unit, value)) => {
                log.push(entry(NodeDecision::Branched { unit, value }));
                let mut one = node.fixed_one.clone();
                one.insert(unit);
                let mut zero = node.fixed_zero.clone();
                zero.insert(unit);
                let (r_one, r_zero) = rayon::join(
                    || search.relax(&one, &node.fixed_zero),
                    || search.relax(&node.fixed_one, &zero),
                );
                for (fixed_one, fixed_zero, res) in [
                    (one, node.fixed_zero.clone(), r_one?),
                    (node.fixed_one.clone(), zero, r_zero?),
                ] {
                    let id = next_id;
                    next_id += 1;
                    match res {
                        Relaxation::Infeasible => log.push(NodeLogEntry {
                            node: id,
                            parent: Some(node.id),
                            depth: node.depth + 1,
                            bound: None,
                            decision: NodeDecision::Infeasible,
                        }),
                        Relaxation::Solved { bound, x } => open.push(Open {
                            node: BranchNode {
                                id,
                                parent: Some(node.id),
                                fixed_zero,
                                fixed_one,
                                relaxation_bound: bound,
                                depth: node.depth + 1,
                            },
                            x,
                        }),
                    }
                }
            }
        }
    }

    let (value, activation) = incumbent.ok_or(MisocpError::Infeasible)?;
    let point = exact_point(net, goal, &activation, win)?;
    Ok(MisocpSolution {
        activation,
        point,
        value,
        nodes: next_id,
        log,
    })
}

fn box_area(net: &Network, id: UnitId) -> f64 {
    net.unit_index(id)
        .map_or(0.0, |i| net.flex_units[i].box_area())
}

/// Smaller subsets first, then lexicographic ids.
fn better_tie(a: &BTreeSet<UnitId>, b: &BTreeSet<UnitId>) -> bool {
    (a.len(), a.iter().collect::<Vec<_>>()) < (b.len(), b.iter().collect::<Vec<_>>())
}

fn exact_point(
    net: &Network,
    goal: Goal,
    subset: &BTreeSet<UnitId>,
    win: &InterfaceWindow,
) -> Result<OperatingPoint, MisocpError> {
    let act = ActivationContext::FixedSubset {
        subset: subset.clone(),
    };
    let res = match goal {
        Goal::Direction(dir) => solve_opf(net, dir, &act, win),
        _ => {
            let model = ActivationModel::from_context(net, &act)?;
            let built = build_program(net, goal, &model, win)?;
            crate::distflow::solve_program_exact(net, &built).map(|(op, _)| op)
        }
    };
    res.map_err(|e| match e {
        OpfError::InfeasibleWindow => MisocpError::Infeasible,
        e => e.into(),
    })
}

/// Brute-force oracle: values every admissible subset with a fixed-activation solve.
pub fn enumerate_subsets(
    net: &Network,
    goal: Goal,
    cardinality_limit: usize,
    win: &InterfaceWindow,
    forced_on: &BTreeSet<UnitId>,
    forced_off: &BTreeSet<UnitId>,
) -> Result<MisocpSolution, MisocpError> {
    check_inputs(net, cardinality_limit, forced_on, forced_off)?;
    let search = Search {
        net,
        goal,
        limit: cardinality_limit,
        win,
    };
    let free: Vec<UnitId> = net
        .unit_ids()
        .into_iter()
        .filter(|id| !forced_on.contains(id) && !forced_off.contains(id))
        .collect();
    let room = cardinality_limit - forced_on.len();
    let mut best: Option<(f64, BTreeSet<UnitId>)> = None;
    let mut count = 0;
    for mask in 0u64..1 << free.len() {
        if mask.count_ones() as usize > room {
            continue;
        }
        let mut subset = forced_on.clone();
        subset.extend(
            free.iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, id)| *id),
        );
        count += 1;
        if let Some(value) = search.leaf(&subset)? {
            let better = best
                .as_ref()
                .is_none_or(|(b, s)| value < *b || (value == *b && better_tie(&subset, s)));
            if better {
                best = Some((value, subset));
            }
        }
    }
    let (value, activation) = best.ok_or(MisocpError::Infeasible)?;
    let point = exact_point(net, goal, &activation, win)?;
    Ok(MisocpSolution {
        activation,
        point,
        value,
        nodes: count,
        log: Vec::new(),
    })
}

#[cfg(test)]
mod tests;
