use super::*;
use crate::distflow::initial_operating_point;
use crate::geometry::{orient, PolygonSet};
use crate::grid::{case33, Branch, Bus, FlexUnit};
use std::collections::BTreeSet;

fn chain(n: usize) -> Network {
    let buses = (1..=n)
        .map(|i| Bus {
            id: i as i64,
            demand_p: if i == 1 { 0.0 } else { 50.0 },
            demand_q: if i == 1 { 0.0 } else { 20.0 },
            v_min: 0.9,
            v_max: 1.1,
            is_reference: i == 1,
        })
        .collect();
    let branches = (1..n)
        .map(|i| Branch {
            from_bus: i as i64,
            to_bus: i as i64 + 1,
            r: 0.1,
            x: 0.05,
            s_max: 1000.0,
            normally_open: false,
        })
        .collect();
    let unit = FlexUnit {
        id: 1,
        bus: n as i64,
        p_min: -10.0,
        p_max: 10.0,
        q_min: -10.0,
        q_max: 10.0,
        reliability: 0.9,
    };
    Network::new(
        "chain",
        1.0,
        12.66,
        None,
        buses,
        branches,
        vec![],
        vec![unit],
    )
    .unwrap()
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

#[test]
fn two_buses_settle_at_the_spring_length() {
    let net = chain(2);
    let lay = layout_force(&net, 2000, 1);
    assert!(lay.residual < LAYOUT_TOLERANCE, "residual {}", lay.residual);
    let d = lay.positions[0].dist(lay.positions[1]);
    assert!((d - lay.spring_length).abs() < 1e-3, "distance {d}");
}

#[test]
fn path_layout_has_no_crossings() {
    let net = chain(5);
    let lay = layout_force(&net, 2000, 7);
    let p = &lay.positions;
    for i in 0..4 {
        for j in i + 2..4 {
            assert!(
                !segments_cross(p[i], p[i + 1], p[j], p[j + 1]),
                "edges {i} and {j} cross"
            );
        }
    }
}

#[test]
fn layout_is_deterministic() {
    let net = case33();
    let a = layout_force(&net, 300, 3);
    let b = layout_force(&net, 300, 3);
    assert_eq!(a, b);
    assert!(a
        .positions
        .iter()
        .all(|p| p.x.is_finite() && p.y.is_finite()));
}

#[test]
fn case33_diagram_has_every_element() {
    let net = case33();
    let lay = layout_force(&net, 300, 3);
    let op = initial_operating_point(&net).unwrap();
    let svg = render_network(&net, &lay, &op);
    assert_eq!(svg.matches("<circle").count(), 33);
    assert_eq!(svg.matches("<line").count(), 32);
    assert_eq!(svg.matches("<title>unit").count(), net.flex_units.len());
    assert!(svg.contains("flexible unit"));
    assert_eq!(svg, render_network(&net, &lay, &op));
}

#[test]
fn lowest_voltage_gets_the_darkest_bin() {
    let dark = voltage_color(0.9, 0.9, 1.1);
    assert_eq!(dark, "hsl(230,70%,20%)");
    assert_eq!(voltage_color(1.1, 0.9, 1.1), "hsl(50,70%,75%)");
    assert_eq!(voltage_color(0.85, 0.9, 1.1), dark);
}

fn nested(levels: usize) -> Segmentation {
    let segments = (0..levels)
        .map(|m| {
            let s = 10.0 * m as f64;
            let polygon = if m == 0 {
                Polygon::point(Point::new(100.0, 50.0))
            } else {
                Polygon::rectangle(100.0 - s, 50.0 - s, 100.0 + s, 50.0 + s)
            };
            Segment {
                subset: BTreeSet::new(),
                cardinality: m,
                polygon,
                probability: 1.0,
                flagged_points: 0,
                empty_intervals: 0,
            }
        })
        .collect();
    Segmentation {
        mode: SegmentationMode::ByCount,
        segments,
        discarded: vec![],
        failures: vec![],
        threshold: None,
        envelope: None,
        nesting_residuals: vec![],
    }
}

fn fills(svg: &str) -> Vec<String> {
    let seg = &svg[svg.find(r#"<g id="segments""#).unwrap()..];
    let seg = &seg[..seg.find("</g>").unwrap()];
    seg.split("fill=\"")
        .skip(1)
        .map(|s| s[..s.find('"').unwrap()].to_string())
        .collect()
}

fn lightness(fill: &str) -> f64 {
    fill.trim_start_matches("hsl(0,0%,")
        .trim_end_matches("%)")
        .parse()
        .unwrap()
}

#[test]
fn by_count_shades_darken_outward_and_inner_is_drawn_last() {
    let seg = nested(6);
    let svg = render_segmentation(&seg, (100.0, 50.0));
    let f = fills(&svg);
    assert_eq!(f.len(), 6);
    let set: BTreeSet<&String> = f.iter().collect();
    assert_eq!(set.len(), 6, "shades must be distinct");
    // Drawing order is outermost first, so lightness increases along it.
    let l: Vec<f64> = f.iter().map(|s| lightness(s)).collect();
    assert!(l.windows(2).all(|w| w[0] < w[1]), "{l:?}");
    assert!((l[0] - DARKEST).abs() < 1e-9 && (l[5] - LIGHTEST).abs() < 1e-9);
    assert!(svg.contains("P (kW)") && svg.contains("Q (kVAr)"));
    assert!(svg.contains(r#"<g id="reference""#));
    assert_eq!(svg, render_segmentation(&seg, (100.0, 50.0)));
}

fn coords(svg: &str) -> Vec<(f64, f64)> {
    let mut out = vec![];
    for chunk in svg.split("points=\"").skip(1) {
        for pair in chunk[..chunk.find('"').unwrap()].split(' ') {
            let (x, y) = pair.split_once(',').unwrap();
            out.push((x.parse().unwrap(), y.parse().unwrap()));
        }
    }
    out
}

#[test]
fn every_vertex_is_inside_the_viewbox() {
    let mut seg = nested(4);
    seg.mode = SegmentationMode::Probabilistic;
    for (i, s) in seg.segments.iter_mut().enumerate() {
        s.probability = 1.0 - 0.2 * i as f64;
        s.subset = (1..=i as i64).collect();
    }
    seg.threshold = Some(0.5);
    seg.envelope = Some(PolygonSet::from(&seg.segments[2].polygon));
    let svg = render_segmentation(&seg, (-500.0, 900.0));
    assert!(svg.contains("stroke-dasharray"));
    let pts = coords(&svg);
    assert!(!pts.is_empty());
    for (x, y) in pts {
        assert!(
            (0.0..=820.0).contains(&x) && (0.0..=620.0).contains(&y),
            "({x}, {y})"
        );
    }
}

#[test]
fn area_chart_shows_boundary_and_samples() {
    use crate::distflow::ActivationContext;
    use crate::tracer::{trace_epsilon, Sample};
    let net = chain(3);
    let area = trace_epsilon(&net, &ActivationContext::all_units(&net), 3).unwrap();
    let samples = [
        Sample {
            p: area.reference_point.0,
            q: area.reference_point.1,
            feasible: true,
        },
        Sample {
            p: 0.0,
            q: 0.0,
            feasible: false,
        },
    ];
    let svg = render_area(&area, &samples);
    assert_eq!(svg.matches("<polygon").count(), 1);
    assert!(svg.contains(r#"<g id="samples""#));
    assert_eq!(coords(&svg).len(), area.polygon().vertices().len());
    assert!(svg.contains("epsilon k=3"));
}
