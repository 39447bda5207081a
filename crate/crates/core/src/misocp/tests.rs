use super::*;
use crate::grid::{case33, generate_radial};

fn none() -> BTreeSet<UnitId> {
    BTreeSet::new()
}

#[test]
fn full_limit_matches_all_units_for_max_p() {
    let net = case33();
    let bb = solve_misocp(
        &net,
        ObjectiveDirection::MAX_P,
        5,
        &InterfaceWindow::default(),
        &none(),
        &none(),
    )
    .unwrap();
    assert_eq!(bb.activation.len(), 5);
    let all = solve_opf(
        &net,
        ObjectiveDirection::MAX_P,
        &ActivationContext::all_units(&net),
        &InterfaceWindow::default(),
    )
    .unwrap();
    assert!((bb.point.objective - all.objective).abs() < 1e-6);
    assert!(audit_node_log(&bb.log).is_empty());
}

#[test]
fn zero_limit_is_initial_point() {
    let net = case33();
    let bb = solve_misocp(
        &net,
        ObjectiveDirection::MIN_P,
        0,
        &InterfaceWindow::default(),
        &none(),
        &none(),
    )
    .unwrap();
    assert!(bb.activation.is_empty());
    let init = crate::distflow::initial_operating_point(&net).unwrap();
    assert!((bb.point.interface_p - init.interface_p).abs() < 1e-4);
    assert!((bb.point.interface_q - init.interface_q).abs() < 1e-4);
}

#[test]
fn singleton_matches_enumeration() {
    let net = case33();
    let dir = ObjectiveDirection::MIN_P;
    let bb = solve_misocp(&net, dir, 1, &InterfaceWindow::default(), &none(), &none()).unwrap();
    let mut best = (f64::INFINITY, 0);
    for id in net.unit_ids() {
        let op = solve_opf(
            &net,
            dir,
            &ActivationContext::subset([id]),
            &InterfaceWindow::default(),
        )
        .unwrap();
        if op.model_objective < best.0 {
            best = (op.model_objective, id);
        }
    }
    assert_eq!(bb.activation, BTreeSet::from([best.1]));
    assert!((bb.value - best.0 - ACTIVATION_COST).abs() < 1e-7);
}

#[test]
fn branch_and_bound_equals_enumeration_on_random_networks() {
    for seed in 0..3 {
        let net = generate_radial(12, 4, seed).unwrap();
        for dir in ObjectiveDirection::ALL {
            for m in 1..=4 {
                let w = InterfaceWindow::default();
                let bb = solve_misocp(&net, dir, m, &w, &none(), &none()).unwrap();
                let en =
                    enumerate_subsets(&net, Goal::Direction(dir), m, &w, &none(), &none()).unwrap();
                assert!(
                    (bb.value - en.value).abs() < 1e-6,
                    "seed {seed} {dir:?} m={m}: {} vs {}",
                    bb.value,
                    en.value
                );
                assert!(audit_node_log(&bb.log).is_empty());
            }
        }
    }
}

#[test]
fn optimum_is_monotone_in_the_limit() {
    let net = case33();
    let mut prev = f64::INFINITY;
    for m in 0..=5 {
        let bb = solve_misocp(
            &net,
            ObjectiveDirection::MIN_Q,
            m,
            &InterfaceWindow::default(),
            &none(),
            &none(),
        )
        .unwrap();
        assert!(bb.value <= prev + 1e-9, "m={m}");
        assert!(bb.activation.len() <= m);
        prev = bb.value;
    }
}

#[test]
fn forced_units_are_respected() {
    let net = case33();
    let on = BTreeSet::from([1]);
    let off = BTreeSet::from([2, 3]);
    let bb = solve_misocp(
        &net,
        ObjectiveDirection::MAX_Q,
        2,
        &InterfaceWindow::default(),
        &on,
        &off,
    )
    .unwrap();
    assert!(bb.activation.contains(&1));
    assert!(!bb.activation.contains(&2) && !bb.activation.contains(&3));
    assert_eq!(
        solve_misocp(
            &net,
            ObjectiveDirection::MAX_Q,
            2,
            &InterfaceWindow::default(),
            &on,
            &on
        )
        .unwrap_err(),
        MisocpError::ForcedConflict(1)
    );
    assert!(matches!(
        solve_misocp(
            &net,
            ObjectiveDirection::MAX_Q,
            0,
            &InterfaceWindow::default(),
            &on,
            &none()
        ),
        Err(MisocpError::TooManyForced {
            forced: 1,
            limit: 0
        })
    ));
}

#[test]
fn infeasible_window_is_reported() {
    let net = case33();
    let w = InterfaceWindow::q_band(-5000.0, -4000.0);
    assert_eq!(
        solve_misocp(&net, ObjectiveDirection::MIN_P, 2, &w, &none(), &none()).unwrap_err(),
        MisocpError::Infeasible
    );
}

#[test]
fn node_log_lines() {
    let net = case33();
    let bb = solve_misocp(
        &net,
        ObjectiveDirection::MIN_P,
        2,
        &InterfaceWindow::default(),
        &none(),
        &none(),
    )
    .unwrap();
    let mut buf = Vec::new();
    write_node_log(&bb.log, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), bb.log.len() + 1);
    assert!(text.lines().nth(1).unwrap().starts_with("0 - 0 "));
}
