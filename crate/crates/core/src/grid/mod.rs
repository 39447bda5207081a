//! Network data model: buses, branches, generators and flexible units of a
//! radial distribution grid, with validation, topology and per-unit scaling.
//!
//! Quantities are stored in the physical units of the network file (kW, kVAr,
//! kVA, ohm, p.u. voltages). [`PerUnit`] converts on demand.

mod io;
mod synth;

pub use io::{
    bundled_network, case33, load_network, network_from_json, network_to_json, NETWORK_SCHEMA,
};
pub use synth::generate_radial;

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use thiserror::Error;

pub type BusId = i64;
pub type UnitId = i64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    /// kW
    pub demand_p: f64,
    /// kVAr
    pub demand_q: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub is_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: BusId,
    pub to_bus: BusId,
    /// ohm
    pub r: f64,
    /// ohm
    pub x: f64,
    /// kVA
    pub s_max: f64,
    pub normally_open: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: BusId,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlexUnit {
    pub id: UnitId,
    pub bus: BusId,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub reliability: f64,
}

impl FlexUnit {
    pub fn box_area(&self) -> f64 {
        (self.p_max - self.p_min) * (self.q_max - self.q_min)
    }

    pub fn contains_origin(&self) -> bool {
        self.p_min <= 0.0 && 0.0 <= self.p_max && self.q_min <= 0.0 && 0.0 <= self.q_max
    }
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema violation: {}", .0.join("; "))]
    Schema(Vec<String>),
    #[error("invalid {element}: {reason}")]
    Invalid { element: String, reason: String },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: i64 },
    #[error("{element} references unknown bus {bus}")]
    UnknownBus { element: String, bus: BusId },
    #[error("unknown branch id {0}")]
    UnknownBranch(usize),
    #[error("unknown flexible unit id {0}")]
    UnknownUnit(UnitId),
    #[error("no reference bus (exactly one bus needs is_reference = true)")]
    NoReference,
    #[error("several reference buses: {0:?}")]
    MultipleReference(Vec<BusId>),
    #[error("cycle through branches {branches:?} (buses {buses:?})")]
    Cycle {
        branches: Vec<usize>,
        buses: Vec<BusId>,
    },
    #[error("buses {0:?} are not connected to the reference bus")]
    Disconnected(Vec<BusId>),
    #[error("network generation failed: {0}")]
    Generation(String),
}

impl GridError {
    /// Malformed input as opposed to well-formed but inconsistent data.
    pub fn is_parse_error(&self) -> bool {
        matches!(
            self,
            GridError::Io { .. } | GridError::Parse(_) | GridError::Schema(_)
        )
    }
}

/// Radial structure rooted at the reference bus.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Topology {
    pub reference: usize,
    /// Bus indices in breadth-first order from the reference bus.
    pub order: Vec<usize>,
    /// For each bus: `(branch id, parent bus index)`; `None` at the reference.
    pub parent: Vec<Option<(usize, usize)>>,
    /// Downstream branch ids of each bus.
    pub children: Vec<Vec<usize>>,
    /// For each in-service branch: `(upstream bus index, downstream bus index)`.
    pub oriented: Vec<Option<(usize, usize)>>,
}

/// Converts between physical units and per-unit values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerUnit {
    pub base_kva: f64,
    pub base_ohm: f64,
}

impl PerUnit {
    pub fn new(base_mva: f64, base_kv: f64) -> Self {
        Self {
            base_kva: base_mva * 1000.0,
            base_ohm: base_kv * base_kv / base_mva,
        }
    }
    pub fn power(&self, kw: f64) -> f64 {
        kw / self.base_kva
    }
    pub fn to_kw(&self, pu: f64) -> f64 {
        pu * self.base_kva
    }
    pub fn impedance(&self, ohm: f64) -> f64 {
        ohm / self.base_ohm
    }
    pub fn to_ohm(&self, pu: f64) -> f64 {
        pu * self.base_ohm
    }
}

/// A validated radial network. Construct with [`Network::new`] or the loaders.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub base_kv: f64,
    /// Reference-bus voltage magnitude, p.u.
    pub ref_voltage: f64,
    pub buses: Vec<Bus>,
    /// Branch id = position in this list.
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub flex_units: Vec<FlexUnit>,
    in_service: Vec<bool>,
    bus_index: HashMap<BusId, usize>,
    topology: Topology,
}

impl Network {
    /// Validates the parts and derives the radial topology. Branches start in
    /// their normal state: in service unless `normally_open`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        base_mva: f64,
        base_kv: f64,
        ref_voltage: Option<f64>,
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
        flex_units: Vec<FlexUnit>,
    ) -> Result<Self, GridError> {
        let in_service = branches.iter().map(|b| !b.normally_open).collect();
        let mut net = Self {
            name: name.into(),
            base_mva,
            base_kv,
            ref_voltage: ref_voltage.unwrap_or(1.0),
            buses,
            branches,
            generators,
            flex_units,
            in_service,
            bus_index: HashMap::new(),
            topology: Topology::default(),
        };
        net.validate()?;
        Ok(net)
    }

    pub fn per_unit(&self) -> PerUnit {
        PerUnit::new(self.base_mva, self.base_kv)
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn reference_index(&self) -> usize {
        self.topology.reference
    }

    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.bus_index.get(&id).copied()
    }

    pub fn unit_index(&self, id: UnitId) -> Option<usize> {
        self.flex_units.iter().position(|u| u.id == id)
    }

    pub fn unit_ids(&self) -> Vec<UnitId> {
        self.flex_units.iter().map(|u| u.id).collect()
    }

    pub fn is_in_service(&self, branch: usize) -> bool {
        self.in_service[branch]
    }

    pub fn in_service_branches(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.branches.len()).filter(|&b| self.in_service[b])
    }

    pub fn total_demand(&self) -> (f64, f64) {
        self.buses
            .iter()
            .fold((0.0, 0.0), |(p, q), b| (p + b.demand_p, q + b.demand_q))
    }

    /// Returns a copy with the given branches opened and closed, re-validated.
    pub fn apply_switching(&self, open: &[usize], close: &[usize]) -> Result<Network, GridError> {
        let mut next = self.clone();
        for &b in open.iter().chain(close) {
            if b >= next.branches.len() {
                return Err(GridError::UnknownBranch(b));
            }
        }
        for &b in open {
            next.in_service[b] = false;
        }
        for &b in close {
            next.in_service[b] = true;
        }
        next.validate()?;
        Ok(next)
    }

    /// Returns a copy with one unit's reliability replaced.
    pub fn with_reliability(&self, unit: UnitId, reliability: f64) -> Result<Network, GridError> {
        let mut next = self.clone();
        let idx = self.unit_index(unit).ok_or(GridError::UnknownUnit(unit))?;
        next.flex_units[idx].reliability = reliability;
        next.validate()?;
        Ok(next)
    }

    /// Returns a copy with the flexible units replaced.
    pub fn with_units(&self, units: Vec<FlexUnit>) -> Result<Network, GridError> {
        let mut next = self.clone();
        next.flex_units = units;
        next.validate()?;
        Ok(next)
    }

    fn validate(&mut self) -> Result<(), GridError> {
        let invalid = |element: String, reason: &str| GridError::Invalid {
            element,
            reason: reason.to_string(),
        };
        let pos_finite = |v: f64| v.is_finite() && v > 0.0;
        if !pos_finite(self.base_mva) || !pos_finite(self.base_kv) {
            return Err(invalid(
                "bases".into(),
                "base_mva and base_kv must be positive",
            ));
        }
        if !pos_finite(self.ref_voltage) {
            return Err(invalid("ref_voltage".into(), "must be positive"));
        }
        if self.buses.is_empty() {
            return Err(invalid("buses".into(), "at least one bus is required"));
        }

        let mut index = HashMap::with_capacity(self.buses.len());
        for (i, b) in self.buses.iter().enumerate() {
            if index.insert(b.id, i).is_some() {
                return Err(GridError::DuplicateId {
                    kind: "bus",
                    id: b.id,
                });
            }
            let el = format!("bus {}", b.id);
            if !b.demand_p.is_finite() || !b.demand_q.is_finite() {
                return Err(invalid(el, "demands must be finite"));
            }
            if !(b.v_min > 0.0 && b.v_min < b.v_max && b.v_max.is_finite()) {
                return Err(invalid(el, "voltage bounds need 0 < v_min < v_max"));
            }
        }
        let refs: Vec<BusId> = self
            .buses
            .iter()
            .filter(|b| b.is_reference)
            .map(|b| b.id)
            .collect();
        match refs.len() {
            0 => return Err(GridError::NoReference),
            1 => {}
            _ => return Err(GridError::MultipleReference(refs)),
        }
        let ref_bus = &self.buses[index[&refs[0]]];
        if ref_bus.v_min > self.ref_voltage || self.ref_voltage > ref_bus.v_max {
            return Err(invalid(
                "ref_voltage".into(),
                "outside the reference bus voltage bounds",
            ));
        }

        for (k, br) in self.branches.iter().enumerate() {
            let el = format!("branch {k} ({}-{})", br.from_bus, br.to_bus);
            for bus in [br.from_bus, br.to_bus] {
                if !index.contains_key(&bus) {
                    return Err(GridError::UnknownBus { element: el, bus });
                }
            }
            if br.from_bus == br.to_bus {
                return Err(invalid(el, "from_bus equals to_bus"));
            }
            if !(br.r >= 0.0 && br.r.is_finite() && br.x.is_finite()) {
                return Err(invalid(el, "needs finite r >= 0 and finite x"));
            }
            if !pos_finite(br.s_max) {
                return Err(invalid(el, "s_max must be positive"));
            }
        }
        for (k, g) in self.generators.iter().enumerate() {
            let el = format!("generator {k} at bus {}", g.bus);
            if !index.contains_key(&g.bus) {
                return Err(GridError::UnknownBus {
                    element: el,
                    bus: g.bus,
                });
            }
            if g.p_min.is_nan() || g.p_max.is_nan() || g.q_min.is_nan() || g.q_max.is_nan() {
                return Err(invalid(el, "bounds must be numbers"));
            }
            if g.p_min > g.p_max || g.q_min > g.q_max {
                return Err(invalid(el, "lower bound exceeds upper bound"));
            }
        }
        let mut unit_ids = std::collections::HashSet::new();
        for u in &self.flex_units {
            if !unit_ids.insert(u.id) {
                return Err(GridError::DuplicateId {
                    kind: "flexible unit",
                    id: u.id,
                });
            }
            let el = format!("flexible unit {}", u.id);
            if !index.contains_key(&u.bus) {
                return Err(GridError::UnknownBus {
                    element: el,
                    bus: u.bus,
                });
            }
            let vals = [u.p_min, u.p_max, u.q_min, u.q_max];
            if vals.iter().any(|v| !v.is_finite()) || u.p_min > u.p_max || u.q_min > u.q_max {
                return Err(invalid(el, "capability box needs finite, ordered bounds"));
            }
            if !(u.reliability > 0.0 && u.reliability <= 1.0) {
                return Err(invalid(el, "reliability must lie in (0, 1]"));
            }
        }
        self.bus_index = index;
        self.topology = self.build_topology()?;
        Ok(())
    }

    fn build_topology(&self) -> Result<Topology, GridError> {
        let n = self.buses.len();
        let reference = self
            .buses
            .iter()
            .position(|b| b.is_reference)
            .expect("checked above");
        let ends = |k: usize| {
            let b = &self.branches[k];
            (self.bus_index[&b.from_bus], self.bus_index[&b.to_bus])
        };

        // Union-find to spot the first branch that closes a loop.
        let mut uf: Vec<usize> = (0..n).collect();
        fn find(uf: &mut [usize], mut a: usize) -> usize {
            while uf[a] != a {
                uf[a] = uf[uf[a]];
                a = uf[a];
            }
            a
        }
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for k in self.in_service_branches() {
            let (a, b) = ends(k);
            let (ra, rb) = (find(&mut uf, a), find(&mut uf, b));
            if ra == rb {
                let (path_b, path_n) = forest_path(&adj, a, b);
                let mut branches = path_b;
                branches.push(k);
                branches.sort_unstable();
                let buses = path_n.iter().map(|&i| self.buses[i].id).collect();
                return Err(GridError::Cycle { branches, buses });
            }
            uf[ra] = rb;
            adj[a].push((k, b));
            adj[b].push((k, a));
        }

        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        let mut oriented = vec![None; self.branches.len()];
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([reference]);
        seen[reference] = true;
        while let Some(i) = queue.pop_front() {
            order.push(i);
            let mut next: Vec<(usize, usize)> = adj[i].clone();
            next.sort_unstable();
            for (k, j) in next {
                if !seen[j] {
                    seen[j] = true;
                    parent[j] = Some((k, i));
                    children[i].push(k);
                    oriented[k] = Some((i, j));
                    queue.push_back(j);
                }
            }
        }
        if order.len() != n {
            let missing = (0..n)
                .filter(|&i| !seen[i])
                .map(|i| self.buses[i].id)
                .collect();
            return Err(GridError::Disconnected(missing));
        }
        Ok(Topology {
            reference,
            order,
            parent,
            children,
            oriented,
        })
    }
}

/// Branch and bus sequence between `a` and `b` in a forest.
fn forest_path(adj: &[Vec<(usize, usize)>], a: usize, b: usize) -> (Vec<usize>, Vec<usize>) {
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; adj.len()];
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([a]);
    seen[a] = true;
    while let Some(i) = queue.pop_front() {
        if i == b {
            break;
        }
        for &(k, j) in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                prev[j] = Some((k, i));
                queue.push_back(j);
            }
        }
    }
    let mut branches = Vec::new();
    let mut buses = vec![b];
    let mut cur = b;
    while let Some((k, p)) = prev[cur] {
        branches.push(k);
        buses.push(p);
        cur = p;
    }
    buses.reverse();
    (branches, buses)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bus(id: BusId, p: f64, is_ref: bool) -> Bus {
        Bus {
            id,
            demand_p: p,
            demand_q: p / 2.0,
            v_min: 0.9,
            v_max: 1.1,
            is_reference: is_ref,
        }
    }

    fn line(a: BusId, b: BusId, open: bool) -> Branch {
        Branch {
            from_bus: a,
            to_bus: b,
            r: 0.1,
            x: 0.1,
            s_max: 1000.0,
            normally_open: open,
        }
    }

    fn net(buses: Vec<Bus>, branches: Vec<Branch>) -> Result<Network, GridError> {
        Network::new("t", 1.0, 12.66, None, buses, branches, vec![], vec![])
    }

    #[test]
    fn two_bus_network_is_radial() {
        let n = net(
            vec![bus(1, 0.0, true), bus(2, 10.0, false)],
            vec![line(1, 2, false)],
        )
        .unwrap();
        assert_eq!(n.topology().order, vec![0, 1]);
        assert_eq!(n.topology().parent[1], Some((0, 0)));
    }

    #[test]
    fn triangle_is_reported_as_cycle() {
        let err = net(
            vec![bus(1, 0.0, true), bus(2, 1.0, false), bus(3, 1.0, false)],
            vec![line(1, 2, false), line(2, 3, false), line(3, 1, false)],
        )
        .unwrap_err();
        match err {
            GridError::Cycle { branches, buses } => {
                assert_eq!(branches, vec![0, 1, 2]);
                assert_eq!(buses.len(), 3);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn isolated_bus_is_reported() {
        let err = net(
            vec![bus(1, 0.0, true), bus(2, 1.0, false), bus(7, 1.0, false)],
            vec![line(1, 2, false)],
        )
        .unwrap_err();
        assert!(matches!(err, GridError::Disconnected(ref v) if v == &vec![7]));
    }

    #[test]
    fn missing_reference_and_dangling_ids() {
        assert!(matches!(
            net(vec![bus(1, 0.0, false)], vec![]),
            Err(GridError::NoReference)
        ));
        let err = net(vec![bus(1, 0.0, true)], vec![line(1, 9, false)]).unwrap_err();
        assert!(matches!(err, GridError::UnknownBus { bus: 9, .. }));
    }

    #[test]
    fn switching_swaps_and_rejects_bad_results() {
        // 1-2-3-4 with a tie 1-4.
        let base = net(
            vec![
                bus(1, 0.0, true),
                bus(2, 1.0, false),
                bus(3, 1.0, false),
                bus(4, 1.0, false),
            ],
            vec![
                line(1, 2, false),
                line(2, 3, false),
                line(3, 4, false),
                line(1, 4, true),
            ],
        )
        .unwrap();
        let swapped = base.apply_switching(&[2], &[3]).unwrap();
        assert!(swapped.is_in_service(3) && !swapped.is_in_service(2));
        assert_eq!(swapped.topology().parent[3], Some((3, 0)));
        // The original is untouched.
        assert!(!base.is_in_service(3) && base.is_in_service(2));
        assert!(matches!(
            base.apply_switching(&[1], &[]),
            Err(GridError::Disconnected(_))
        ));
        assert!(matches!(
            base.apply_switching(&[], &[3]),
            Err(GridError::Cycle { .. })
        ));
        assert!(matches!(
            base.apply_switching(&[9], &[]),
            Err(GridError::UnknownBranch(9))
        ));
    }

    #[test]
    fn per_unit_round_trip() {
        let pu = PerUnit::new(10.0, 12.66);
        for v in [0.0, 1.0, 3715.0, -123.456, 1e-7] {
            let back = pu.to_kw(pu.power(v));
            assert!((back - v).abs() <= 1e-12 * v.abs().max(1e-300));
            let z = pu.to_ohm(pu.impedance(v));
            assert!((z - v).abs() <= 1e-12 * v.abs().max(1e-300));
        }
        assert!((pu.base_ohm - 16.02756).abs() < 1e-9);
    }
}
