use super::*;
use crate::geometry::{contains, PolygonSet};
use crate::grid::case33;

fn opts() -> TraceOptions {
    TraceOptions { workers: 4 }
}

#[test]
fn epsilon_trace_is_clean_and_counterclockwise() {
    let net = case33();
    let act = ActivationContext::all_units(&net);
    let area = trace_epsilon_with(&net, &act, 10, &opts()).unwrap();
    assert_eq!(area.boundary.len(), 20);
    assert!(area.gaps.is_empty());
    for b in &area.boundary {
        assert!(b.is_clean(), "{b:?}");
        assert!(b.exactness_residual <= EXACTNESS_TOLERANCE);
        assert!(b.sweep_mismatch <= SWEEP_MISMATCH_TOL);
    }
    let pts = area.points();
    assert!(crate::geometry::signed_area(&pts) > 0.0);
    assert!(area.reference_inside(1e-9));
    let ext = extreme_points_with(&net, &act, &opts()).unwrap();
    let width = (ext.q_max - ext.q_min) / 10.0;
    for b in &area.boundary {
        let lo = ext.q_min + width * b.interval as f64 - 1e-3;
        assert!(b.q >= lo && b.q <= lo + width + 2e-3, "{b:?}");
    }
}

#[test]
fn radial_and_epsilon_agree() {
    let net = case33();
    let act = ActivationContext::all_units(&net);
    let eps = trace_epsilon_with(&net, &act, 50, &opts()).unwrap();
    let rad = trace_radial_with(&net, &act, 50, &opts()).unwrap();
    assert_eq!(rad.boundary.len(), 100);
    assert!(rad.boundary.iter().all(BoundaryPoint::is_clean));
    let (a, b) = (eps.hull().area(), rad.hull().area());
    assert!((a - b).abs() <= 0.02 * a, "{a} vs {b}");
}

#[test]
fn no_units_collapses_to_reference() {
    let net = case33();
    for area in [
        trace_epsilon_with(&net, &ActivationContext::Off, 3, &opts()).unwrap(),
        trace_radial_with(&net, &ActivationContext::Off, 3, &opts()).unwrap(),
    ] {
        let (p0, q0) = area.reference_point;
        for b in &area.boundary {
            assert!((b.p - p0).abs() < 1e-3 && (b.q - q0).abs() < 1e-3, "{b:?}");
        }
        assert!(area.hull().area() < 1e-3);
    }
}

#[test]
fn monte_carlo_samples_fall_inside_the_traced_area() {
    let net = case33();
    let act = ActivationContext::all_units(&net);
    let area = trace_epsilon_with(&net, &act, 20, &opts()).unwrap();
    let inflated = area.hull().inflate_convex(0.01 * area.hull().diameter());
    let samples = monte_carlo_cloud_with(&net, &act, 500, 9, &opts()).unwrap();
    assert!(samples.iter().filter(|s| s.feasible).count() > 400);
    for s in samples.iter().filter(|s| s.feasible) {
        assert!(inflated.contains_point(Point::new(s.p, s.q), 0.0), "{s:?}");
    }
    let again = monte_carlo_cloud_with(&net, &act, 500, 9, &TraceOptions { workers: 1 }).unwrap();
    assert_eq!(samples, again);
}

#[test]
fn cardinality_areas_nest_inside_the_full_area() {
    let net = case33();
    let full = trace_epsilon_with(&net, &ActivationContext::all_units(&net), 8, &opts()).unwrap();
    let one = trace_epsilon_with(
        &net,
        &ActivationContext::Relaxed {
            cardinality_limit: Some(1),
        },
        8,
        &opts(),
    )
    .unwrap();
    assert!(one.boundary.iter().all(|b| b.active_units.len() <= 1));
    let outer = PolygonSet::from(&full.hull().inflate_convex(1e-3));
    assert!(contains(&outer, &one.polygon(), 1e-6).unwrap());
    assert!(one.polygon().area() < full.polygon().area());
}

#[test]
fn table_and_arguments() {
    let net = case33();
    let area = trace_epsilon_with(&net, &ActivationContext::subset([1]), 2, &opts()).unwrap();
    let t = area.to_table();
    let mut lines = t.lines();
    assert_eq!(lines.next(), Some("method,interval,P_kW,Q_kVAr,flags"));
    assert_eq!(lines.count(), 4);
    assert!(matches!(
        trace_epsilon(&net, &ActivationContext::Off, 0),
        Err(TraceError::InvalidArgument(_))
    ));
    assert!(matches!(
        trace_radial(&net, &ActivationContext::Off, 1),
        Err(TraceError::InvalidArgument(_))
    ));
    assert!(matches!(
        trace_epsilon(&net, &ActivationContext::subset([99]), 2),
        Err(TraceError::Opf(OpfError::UnknownUnit(99)))
    ));
}

fn two_bus_with_box(half: f64, s_max: f64) -> Network {
    use crate::grid::{Branch, Bus, FlexUnit};
    let bus = |id, demand_p, demand_q, is_reference| Bus {
        id,
        demand_p,
        demand_q,
        v_min: 0.9,
        v_max: 1.1,
        is_reference,
    };
    Network::new(
        "two",
        1.0,
        0.4,
        None,
        vec![bus(1, 0.0, 0.0, true), bus(2, 300.0, 100.0, false)],
        vec![Branch {
            from_bus: 1,
            to_bus: 2,
            r: 0.0,
            x: 0.0,
            s_max,
            normally_open: false,
        }],
        vec![],
        vec![FlexUnit {
            id: 1,
            bus: 2,
            p_min: -half,
            p_max: half,
            q_min: -half,
            q_max: half,
            reliability: 0.95,
        }],
    )
    .unwrap()
}

fn near(a: Point, b: (f64, f64), tol: f64) -> bool {
    (a.x - b.0).abs() <= tol && (a.y - b.1).abs() <= tol
}

#[test]
fn lossless_box_is_reproduced_by_both_methods() {
    let net = two_bus_with_box(200.0, 2000.0);
    let act = ActivationContext::all_units(&net);
    let eps = trace_epsilon_with(&net, &act, 4, &opts()).unwrap();
    assert_eq!(eps.boundary.len(), 8);
    let corners = [
        (100.0, -100.0),
        (500.0, -100.0),
        (500.0, 300.0),
        (100.0, 300.0),
    ];
    let poly = eps.polygon();
    assert!((poly.area() - 160_000.0).abs() < 0.1, "{}", poly.area());
    for c in corners {
        assert!(
            poly.vertices().iter().any(|&v| near(v, c, 1e-4)),
            "{c:?} missing from {:?}",
            poly.vertices()
        );
    }
    let rad = trace_radial_with(&net, &act, 2, &opts()).unwrap();
    let expected = [
        (500.0, 100.0),
        (300.0, 300.0),
        (100.0, 100.0),
        (300.0, -100.0),
    ];
    for (b, e) in rad.boundary.iter().zip(expected) {
        assert!(near(b.point(), e, 1e-4), "{b:?} vs {e:?}");
    }
}

#[test]
fn finer_traces_do_not_lose_area() {
    let net = case33();
    let act = ActivationContext::all_units(&net);
    let coarse = trace_epsilon_with(&net, &act, 10, &opts())
        .unwrap()
        .hull()
        .area();
    let fine = trace_epsilon_with(&net, &act, 50, &opts())
        .unwrap()
        .hull()
        .area();
    assert!(fine >= coarse - 1e-9, "{fine} < {coarse}");
}

#[test]
fn monte_carlo_without_units_stays_at_reference() {
    let net = case33();
    let init = initial_operating_point(&net).unwrap();
    for s in monte_carlo_cloud_with(&net, &ActivationContext::Off, 5, 1, &opts()).unwrap() {
        assert!(s.feasible);
        assert!((s.p - init.interface_p).abs() < 1e-6 && (s.q - init.interface_q).abs() < 1e-6);
    }
}

#[test]
fn oversized_unit_yields_infeasible_samples() {
    let net = two_bus_with_box(200.0, 400.0);
    let samples =
        monte_carlo_cloud_with(&net, &ActivationContext::all_units(&net), 200, 3, &opts()).unwrap();
    assert!(samples.iter().any(|s| !s.feasible));
    assert!(samples.iter().any(|s| s.feasible));
}
