//! Backward/forward sweep load flow for radial networks.
//!
//! The sweep is independent of the conic model: it exploits radiality to
//! solve the exact branch-flow equations by fixed-point iteration and only
//! reports limit violations.

use super::{BranchFlow, FlexOutput, OperatingPoint, Violation};
use crate::grid::Network;
use thiserror::Error;

pub const SWEEP_TOLERANCE: f64 = 1e-10;
pub const SWEEP_MAX_ITER: usize = 100;
/// Slack allowed on voltage and line limits when flagging violations, p.u.
pub const LIMIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("sweep diverged after {iterations} iterations (mismatch {mismatch:e} p.u.)")]
    Diverged { iterations: usize, mismatch: f64 },
    #[error("voltage collapse at bus {bus}")]
    VoltageCollapse { bus: i64 },
    #[error("expected {expected} bus injections, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Runs the sweep for net per-bus injections `(P, Q)` in kW / kVAr
/// (generation plus flexible output; demand is taken from the network).
pub fn sweep_power_flow(
    net: &Network,
    injections: &[(f64, f64)],
) -> Result<OperatingPoint, SweepError> {
    let nb = net.buses.len();
    if injections.len() != nb {
        return Err(SweepError::Dimension {
            expected: nb,
            got: injections.len(),
        });
    }
    let pu = net.per_unit();
    let topo = net.topology();
    let nbr = net.branches.len();
    let r: Vec<f64> = net.branches.iter().map(|b| pu.impedance(b.r)).collect();
    let x: Vec<f64> = net.branches.iter().map(|b| pu.impedance(b.x)).collect();
    let sp: Vec<f64> = (0..nb)
        .map(|i| pu.power(net.buses[i].demand_p - injections[i].0))
        .collect();
    let sq: Vec<f64> = (0..nb)
        .map(|i| pu.power(net.buses[i].demand_q - injections[i].1))
        .collect();

    let w_ref = net.ref_voltage * net.ref_voltage;
    let mut w = vec![w_ref; nb];
    let mut p = vec![0.0; nbr];
    let mut q = vec![0.0; nbr];
    let mut l = vec![0.0; nbr];

    let mut mismatch = f64::INFINITY;
    let mut iterations = 0;
    while iterations < SWEEP_MAX_ITER {
        iterations += 1;
        // Backward: flows from the leaves up, losses from the previous iterate.
        for &j in topo.order.iter().rev() {
            if let Some((k, _)) = topo.parent[j] {
                let mut pk = sp[j] + r[k] * l[k];
                let mut qk = sq[j] + x[k] * l[k];
                for &c in &topo.children[j] {
                    pk += p[c];
                    qk += q[c];
                }
                p[k] = pk;
                q[k] = qk;
            }
        }
        // Forward: voltages from the reference down, then currents.
        for &j in &topo.order {
            if let Some((k, i)) = topo.parent[j] {
                w[j] =
                    w[i] - 2.0 * (r[k] * p[k] + x[k] * q[k]) + (r[k] * r[k] + x[k] * x[k]) * l[k];
                if !(w[j] > 0.0) {
                    return Err(SweepError::VoltageCollapse {
                        bus: net.buses[j].id,
                    });
                }
            }
        }
        mismatch = 0.0f64;
        for &j in &topo.order {
            if let Some((k, i)) = topo.parent[j] {
                let lk = (p[k] * p[k] + q[k] * q[k]) / w[i];
                mismatch = mismatch
                    .max((lk - l[k]).abs() * (r[k].abs() + x[k].abs() + r[k] * r[k] + x[k] * x[k]));
                l[k] = lk;
            }
        }
        if !mismatch.is_finite() {
            break;
        }
        if mismatch < SWEEP_TOLERANCE {
            break;
        }
    }
    if !(mismatch < SWEEP_TOLERANCE) {
        return Err(SweepError::Diverged {
            iterations,
            mismatch,
        });
    }
    // One more backward pass so flows carry the final losses exactly.
    for &j in topo.order.iter().rev() {
        if let Some((k, _)) = topo.parent[j] {
            let mut pk = sp[j] + r[k] * l[k];
            let mut qk = sq[j] + x[k] * l[k];
            for &c in &topo.children[j] {
                pk += p[c];
                qk += q[c];
            }
            p[k] = pk;
            q[k] = qk;
        }
    }

    let rf = topo.reference;
    let mut ip = sp[rf];
    let mut iq = sq[rf];
    for &c in &topo.children[rf] {
        ip += p[c];
        iq += q[c];
    }
    let mut flows = Vec::new();
    let mut residual = 0.0f64;
    let (mut loss_p, mut loss_q) = (0.0, 0.0);
    let mut violations = Vec::new();
    for k in net.in_service_branches() {
        let (i, _) = topo.oriented[k].expect("in-service branch is oriented");
        residual = residual.max((p[k] * p[k] + q[k] * q[k] - l[k] * w[i]).abs());
        loss_p += r[k] * l[k];
        loss_q += x[k] * l[k];
        flows.push(BranchFlow {
            branch: k,
            p: pu.to_kw(p[k]),
            q: pu.to_kw(q[k]),
            l: l[k],
        });
        let s = (p[k] * p[k] + q[k] * q[k]).sqrt();
        let smax = pu.power(net.branches[k].s_max);
        if s > smax + LIMIT_TOLERANCE {
            violations.push(Violation::LineLimit {
                branch: k,
                loading: s / smax,
            });
        }
    }
    let voltages: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    for (i, b) in net.buses.iter().enumerate() {
        let v = voltages[i];
        if v < b.v_min - LIMIT_TOLERANCE || v > b.v_max + LIMIT_TOLERANCE {
            violations.push(Violation::Voltage {
                bus: b.id,
                voltage: v,
            });
        }
    }
    let flex_outputs = net
        .flex_units
        .iter()
        .map(|u| FlexOutput {
            unit: u.id,
            p: 0.0,
            q: 0.0,
            activation: 0.0,
        })
        .collect();
    Ok(OperatingPoint {
        interface_p: pu.to_kw(ip),
        interface_q: pu.to_kw(iq),
        voltages,
        flows,
        flex_outputs,
        losses_p: pu.to_kw(loss_p),
        losses_q: pu.to_kw(loss_q),
        exactness_residual: residual,
        objective: f64::NAN,
        model_objective: f64::NAN,
        inexact: false,
        violations,
        iterations,
    })
}
