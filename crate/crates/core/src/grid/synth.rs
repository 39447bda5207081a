use super::{Branch, Bus, FlexUnit, GridError, Network};
use crate::distflow::sweep_power_flow;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX_ATTEMPTS: usize = 25;
const BASE_MVA: f64 = 10.0;
const BASE_KV: f64 = 12.66;
/// Total nominal demand the loads are spread over, kW.
const TARGET_DEMAND: f64 = 3000.0;

/// Generates a random radial feeder that is feasible with all units idle.
///
/// Bus 1 is the reference. Each later bus attaches to a uniformly chosen
/// earlier bus. Networks with at least six buses get one normally-open tie
/// between two buses in different subtrees of the reference (or, failing that,
/// two non-adjacent buses). Flexible units get symmetric boxes of 100 to 200
/// kW / kVAr and reliabilities in [0.92, 0.99].
pub fn generate_radial(n_buses: usize, n_flex: usize, seed: u64) -> Result<Network, GridError> {
    if n_buses < 2 {
        return Err(GridError::Generation(format!(
            "need at least 2 buses, got {n_buses}"
        )));
    }
    if n_flex >= n_buses {
        return Err(GridError::Generation(format!(
            "{n_flex} flexible units do not fit on {} non-reference buses",
            n_buses - 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = String::new();
    for attempt in 0..MAX_ATTEMPTS {
        let net = candidate(&mut rng, n_buses, n_flex, seed)?;
        match sweep_power_flow(&net, &vec![(0.0, 0.0); n_buses]) {
            Ok(op) if op.violations.is_empty() => return Ok(net),
            Ok(op) => {
                last = format!(
                    "attempt {attempt}: {} limit violations",
                    op.violations.len()
                )
            }
            Err(e) => last = format!("attempt {attempt}: {e}"),
        }
    }
    Err(GridError::Generation(format!(
        "no feasible network after {MAX_ATTEMPTS} attempts ({last})"
    )))
}

fn candidate(
    rng: &mut ChaCha8Rng,
    n: usize,
    n_flex: usize,
    seed: u64,
) -> Result<Network, GridError> {
    let mean_load = (TARGET_DEMAND / (n - 1) as f64).clamp(20.0, 150.0);
    let mut buses = vec![Bus {
        id: 1,
        demand_p: 0.0,
        demand_q: 0.0,
        v_min: 0.9,
        v_max: 1.1,
        is_reference: true,
    }];
    let mut parent = vec![usize::MAX];
    let mut branches = Vec::with_capacity(n);
    for i in 1..n {
        let p = rng.gen_range(0..i);
        parent.push(p);
        let load = round(mean_load * rng.gen_range(0.5..1.5), 1.0);
        buses.push(Bus {
            id: i as i64 + 1,
            demand_p: load,
            demand_q: round(load * rng.gen_range(0.3..0.7), 1.0),
            v_min: 0.9,
            v_max: 1.1,
            is_reference: false,
        });
        let r = round(rng.gen_range(0.1..0.5), 1e-4);
        branches.push(Branch {
            from_bus: p as i64 + 1,
            to_bus: i as i64 + 1,
            r,
            x: round(r * rng.gen_range(0.6..1.2), 1e-4),
            s_max: 0.0,
            normally_open: false,
        });
    }

    // Ratings: generous headroom over the downstream apparent demand.
    let mut down_p: Vec<f64> = buses.iter().map(|b| b.demand_p).collect();
    let mut down_q: Vec<f64> = buses.iter().map(|b| b.demand_q).collect();
    for i in (1..n).rev() {
        down_p[parent[i]] += down_p[i];
        down_q[parent[i]] += down_q[i];
    }
    for (k, br) in branches.iter_mut().enumerate() {
        let s = down_p[k + 1].hypot(down_q[k + 1]);
        br.s_max = round(1.5 * s + 1000.0, 100.0);
    }

    if n >= 6 {
        let (a, b) = pick_tie(rng, &parent);
        let r = round(rng.gen_range(0.5..2.0), 1e-4);
        branches.push(Branch {
            from_bus: a as i64 + 1,
            to_bus: b as i64 + 1,
            r,
            x: r,
            s_max: 3000.0,
            normally_open: true,
        });
    }

    let sites = sample(rng, n - 1, n_flex).into_vec();
    let flex_units = sites
        .into_iter()
        .enumerate()
        .map(|(u, s)| {
            let a = round(rng.gen_range(100.0..200.0), 10.0);
            let b = round(rng.gen_range(100.0..200.0), 10.0);
            FlexUnit {
                id: u as i64 + 1,
                bus: s as i64 + 2,
                p_min: -a,
                p_max: a,
                q_min: -b,
                q_max: b,
                reliability: round(rng.gen_range(0.92..=0.99), 1e-3),
            }
        })
        .collect();

    Network::new(
        format!("radial{n}_s{seed}"),
        BASE_MVA,
        BASE_KV,
        None,
        buses,
        branches,
        Vec::new(),
        flex_units,
    )
}

/// Two non-adjacent non-reference buses, preferably under different
/// children of the reference.
fn pick_tie(rng: &mut ChaCha8Rng, parent: &[usize]) -> (usize, usize) {
    let n = parent.len();
    let root_child = |mut i: usize| {
        while parent[i] != 0 {
            i = parent[i];
        }
        i
    };
    let adjacent = |a: usize, b: usize| parent[a] == b || parent[b] == a;
    let mut fallback = None;
    for _ in 0..200 {
        let a = rng.gen_range(1..n);
        let b = rng.gen_range(1..n);
        if a == b || adjacent(a, b) {
            continue;
        }
        let (a, b) = (a.min(b), a.max(b));
        if root_child(a) != root_child(b) {
            return (a, b);
        }
        fallback.get_or_insert((a, b));
    }
    // n >= 6 guarantees a non-adjacent pair exists; scan deterministically if sampling missed.
    fallback.unwrap_or_else(|| {
        (1..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .find(|&(a, b)| !adjacent(a, b))
            .expect("a tree with 5+ non-reference buses has a non-adjacent pair")
    })
}

fn round(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}
