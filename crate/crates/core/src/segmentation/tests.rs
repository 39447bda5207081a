use super::*;
use crate::grid::{case33, generate_radial, FlexUnit};

fn opts() -> TraceOptions {
    TraceOptions { workers: 4 }
}

fn unit(id: UnitId, bus: i64, reliability: f64) -> FlexUnit {
    FlexUnit {
        id,
        bus,
        p_min: -150.0,
        p_max: 150.0,
        q_min: -150.0,
        q_max: 150.0,
        reliability,
    }
}

fn with_reliabilities(rs: &[f64]) -> Network {
    let base = generate_radial(12, 0, 4).unwrap();
    let units = rs
        .iter()
        .enumerate()
        .map(|(i, &r)| unit(i as UnitId + 1, i as i64 + 2, r))
        .collect();
    base.with_units(units).unwrap()
}

#[test]
fn probability_arithmetic() {
    let net = with_reliabilities(&[0.9, 0.8, 0.99]);
    assert_eq!(subset_probability(&BTreeSet::new(), &net).unwrap(), 1.0);
    assert_eq!(
        subset_probability(&BTreeSet::from([3]), &net).unwrap(),
        0.99
    );
    let p = subset_probability(&BTreeSet::from([1, 2]), &net).unwrap();
    assert!((p - 0.72).abs() <= f64::EPSILON, "{p}");
    assert!(matches!(
        subset_probability(&BTreeSet::from([7]), &net),
        Err(SegmentationError::UnknownUnit(7))
    ));
}

#[test]
fn ranking_of_two_units() {
    let net = with_reliabilities(&[0.9, 0.8]);
    let r = rank_subsets(&net, None).unwrap();
    let sets: Vec<Vec<UnitId>> = r
        .iter()
        .map(|s| s.subset.iter().copied().collect())
        .collect();
    assert_eq!(sets, vec![vec![1], vec![2], vec![1, 2]]);
}

fn brute_force(net: &Network) -> Vec<RankedSubset> {
    let ids = net.unit_ids();
    let mut all: Vec<RankedSubset> = (1u32..1 << ids.len())
        .map(|mask| {
            let subset: BTreeSet<UnitId> = ids
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &id)| id)
                .collect();
            let probability = subset_probability(&subset, net).unwrap();
            RankedSubset {
                subset,
                probability,
            }
        })
        .collect();
    all.sort_by(rank_order);
    all
}

#[test]
fn ranking_matches_full_enumeration() {
    let rs = [0.99, 0.95, 0.95, 0.93, 0.97, 0.92, 0.95, 0.98, 0.94, 0.96];
    let net = with_reliabilities(&rs);
    let full = rank_subsets(&net, None).unwrap();
    assert_eq!(full.len(), 1023);
    let oracle = brute_force(&net);
    for (a, b) in full.iter().zip(&oracle) {
        assert_eq!(a.subset, b.subset);
        assert_eq!(a.probability, b.probability);
    }
    let top = rank_subsets(&net, Some(5)).unwrap();
    assert_eq!(top[..], full[..5]);
}

#[test]
fn ranking_is_monotone_with_tied_reliabilities() {
    let net = with_reliabilities(&[
        0.99, 0.95, 0.96, 0.945, 0.97, 0.985, 0.95, 0.98, 0.965, 0.955,
    ]);
    let r = rank_subsets(&net, None).unwrap();
    assert!(r.windows(2).all(|w| w[0].probability >= w[1].probability));
    // Units 2 and 7 are equally reliable, so swapping them is an exact tie.
    let a = subset_probability(&BTreeSet::from([2, 3, 6]), &net).unwrap();
    let b = subset_probability(&BTreeSet::from([3, 6, 7]), &net).unwrap();
    assert_eq!(a, b);
}

#[test]
fn uncapped_ranking_is_guarded() {
    let rs = [0.95; 21];
    let base = generate_radial(30, 0, 1).unwrap();
    let units = rs
        .iter()
        .enumerate()
        .map(|(i, &r)| unit(i as UnitId + 1, i as i64 + 2, r))
        .collect();
    let net = base.with_units(units).unwrap();
    assert!(matches!(
        rank_subsets(&net, None),
        Err(SegmentationError::Capacity(21))
    ));
    let capped = rank_subsets(&net, Some(30)).unwrap();
    assert_eq!(capped.len(), 30);
    assert!(capped
        .windows(2)
        .all(|w| rank_order(&w[0], &w[1]) != Ordering::Greater));
}

#[test]
fn single_unit_by_count_has_two_levels() {
    let net = with_reliabilities(&[0.95]);
    let seg = segment_by_count(&net, 4, &opts()).unwrap();
    assert_eq!(seg.segments.len(), 2);
    assert!(seg.segments[0].polygon.is_degenerate());
    assert!(seg.segments[1].polygon.area() > 0.0);
}

#[test]
fn by_count_levels_nest_on_case33() {
    let net = case33();
    let seg = segment_by_count(&net, 8, &opts()).unwrap();
    assert_eq!(seg.segments.len(), 6);
    for w in seg.segments.windows(2) {
        assert!(contains(&(&w[1].polygon).into(), &w[0].polygon, CONTAINMENT_TOL).unwrap());
        assert!(w[1].polygon.area() >= w[0].polygon.area());
    }
    assert_eq!(seg.segments[0].polygon.area(), 0.0);
    assert_eq!(seg.nesting_residuals.len(), 5);
}

#[test]
fn duplicate_unit_with_lower_reliability_is_discarded() {
    let base = generate_radial(12, 0, 4).unwrap();
    let net = base
        .with_units(vec![unit(1, 5, 0.98), unit(2, 5, 0.9)])
        .unwrap();
    let popts = ProbabilisticOptions {
        k: 8,
        ..Default::default()
    };
    let seg = segment_probabilistic(&net, &popts, &opts()).unwrap();
    assert_eq!(seg.discarded.len(), 1);
    assert_eq!(seg.discarded[0].subset, BTreeSet::from([2]));
    let kept: Vec<_> = seg.segments.iter().map(|s| s.subset.clone()).collect();
    assert_eq!(kept, vec![BTreeSet::from([1]), BTreeSet::from([1, 2])]);
    assert!(seg.failures.is_empty());
}

#[test]
fn single_unit_probabilistic() {
    let net = with_reliabilities(&[0.97]);
    let seg = segment_probabilistic(
        &net,
        &ProbabilisticOptions {
            k: 6,
            ..Default::default()
        },
        &opts(),
    )
    .unwrap();
    assert_eq!(seg.segments.len(), 1);
    assert_eq!(seg.segments[0].probability, 0.97);
}

#[test]
fn envelope_and_discard_soundness() {
    let net = with_reliabilities(&[0.99, 0.93, 0.96, 0.95]);
    let popts = ProbabilisticOptions {
        k: 8,
        max_segments: 15,
        threshold: Some(0.9),
        ..Default::default()
    };
    let seg = segment_probabilistic(&net, &popts, &opts()).unwrap();
    let union = seg.aggregated().unwrap();
    for d in &seg.discarded {
        let area = trace_epsilon_in(
            &net,
            &ActivationContext::FixedSubset {
                subset: d.subset.clone(),
            },
            8,
        )
        .unwrap();
        assert!(
            contains(&union, &area.polygon(), CONTAINMENT_TOL).unwrap(),
            "{d:?}"
        );
    }
    for (i, s) in seg.segments.iter().enumerate() {
        for earlier in &seg.segments[..i] {
            assert!(!contains(&(&earlier.polygon).into(), &s.polygon, CONTAINMENT_TOL).unwrap());
        }
    }
    let env = seg.envelope.as_ref().unwrap();
    assert!(env.area() < union.area());
    assert!(seg
        .segments
        .windows(2)
        .all(|w| w[0].probability >= w[1].probability));
}
