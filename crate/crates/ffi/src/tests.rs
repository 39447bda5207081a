use super::*;
use flexseg::grid::{generate_radial, network_to_json};

fn small() -> *mut FlexsegNetwork {
    let json = CString::new(network_to_json(&generate_radial(8, 2, 3).unwrap())).unwrap();
    let mut net = ptr::null_mut();
    assert_eq!(
        unsafe { flexseg_network_from_json(json.as_ptr(), &mut net) },
        FlexsegStatus::Ok
    );
    net
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(flexseg_last_error()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn bundled_network_loads() {
    let name = CString::new("case33").unwrap();
    let mut net = ptr::null_mut();
    unsafe {
        assert_eq!(
            flexseg_network_load(name.as_ptr(), &mut net),
            FlexsegStatus::Ok
        );
        assert_eq!(flexseg_network_bus_count(net), 33);
        assert_eq!(flexseg_network_unit_count(net), 5);
        flexseg_network_free(net);
    }
    assert!(last_error().is_empty());
}

#[test]
fn null_arguments_are_reported() {
    let mut net = ptr::null_mut();
    let status = unsafe { flexseg_network_load(ptr::null(), &mut net) };
    assert_eq!(status, FlexsegStatus::NullArgument);
    assert!(net.is_null());
    assert!(last_error().contains("name_or_path"));
    let (mut p, mut q) = (0.0, 0.0);
    assert_eq!(
        unsafe { flexseg_reference_point(ptr::null(), &mut p, &mut q) },
        FlexsegStatus::NullArgument
    );
    assert_eq!(unsafe { flexseg_network_bus_count(ptr::null()) }, 0);
    assert!(unsafe { flexseg_segmentation_to_json(ptr::null()) }.is_null());
    unsafe { flexseg_network_free(ptr::null_mut()) };
}

#[test]
fn error_classes_map_to_status_codes() {
    let mut net = ptr::null_mut();
    let bad = CString::new("{ not json").unwrap();
    assert_eq!(
        unsafe { flexseg_network_from_json(bad.as_ptr(), &mut net) },
        FlexsegStatus::Parse
    );
    let missing = CString::new("/nonexistent/net.json").unwrap();
    assert_ne!(
        unsafe { flexseg_network_load(missing.as_ptr(), &mut net) },
        FlexsegStatus::Ok
    );
    assert!(!last_error().is_empty());

    let net = small();
    unsafe {
        assert_eq!(
            flexseg_network_set_reliability(net, 999, 0.5),
            FlexsegStatus::Validation
        );
        assert_eq!(
            flexseg_network_set_reliability(net, 1, 1.5),
            FlexsegStatus::Validation
        );
        let (mut p, mut q) = (0.0, 0.0);
        assert_eq!(
            flexseg_opf(net, 2, 0, &mut p, &mut q),
            FlexsegStatus::Validation
        );
        let mut area = ptr::null_mut();
        assert_eq!(
            flexseg_trace_area(net, 0, 1, &mut area),
            FlexsegStatus::Validation
        );
        flexseg_network_free(net);
    }
}

#[test]
fn opf_moves_away_from_the_reference_point() {
    let net = small();
    unsafe {
        let (mut p0, mut q0, mut lo, mut hi, mut q) = (0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(
            flexseg_reference_point(net, &mut p0, &mut q0),
            FlexsegStatus::Ok
        );
        assert_eq!(flexseg_opf(net, 1, 0, &mut lo, &mut q), FlexsegStatus::Ok);
        assert_eq!(flexseg_opf(net, -1, 0, &mut hi, &mut q), FlexsegStatus::Ok);
        assert!(lo <= p0 + 1e-6 && p0 <= hi + 1e-6, "{lo} {p0} {hi}");
        assert!(hi - lo > 1.0);
        flexseg_network_free(net);
    }
}

#[test]
fn area_and_segmentations_round_trip() {
    let net = small();
    unsafe {
        let mut area = ptr::null_mut();
        assert_eq!(flexseg_trace_area(net, 3, 1, &mut area), FlexsegStatus::Ok);
        let n = flexseg_area_len(area);
        assert!(n >= 3);
        let (mut p, mut q) = (0.0, 0.0);
        assert_eq!(
            flexseg_area_point(area, 0, &mut p, &mut q),
            FlexsegStatus::Ok
        );
        assert!(p.is_finite() && q.is_finite());
        assert_eq!(
            flexseg_area_point(area, n, &mut p, &mut q),
            FlexsegStatus::OutOfRange
        );
        let total = flexseg_area_hull_area(area);
        assert!(total > 0.0);
        flexseg_area_free(area);

        let mut seg = ptr::null_mut();
        assert_eq!(
            flexseg_segment_by_count(net, 3, 1, &mut seg),
            FlexsegStatus::Ok
        );
        assert_eq!(flexseg_segmentation_len(seg), 3);
        let (mut card, mut prob, mut a) = (0usize, 0.0, 0.0);
        assert_eq!(
            flexseg_segment_info(seg, 2, &mut card, &mut prob, &mut a),
            FlexsegStatus::Ok
        );
        assert_eq!(card, 2);
        assert!((a - total).abs() <= 1e-3 * total, "{a} {total}");
        assert!(flexseg_segmentation_envelope_area(seg).is_nan());
        let json = flexseg_segmentation_to_json(seg);
        let doc = CStr::from_ptr(json).to_str().unwrap().to_owned();
        flexseg_string_free(json);
        assert!(doc.contains("\"segments\""));
        let svg = flexseg_segmentation_svg(seg, 0.0, 0.0);
        assert!(CStr::from_ptr(svg).to_str().unwrap().contains("<svg"));
        flexseg_string_free(svg);
        flexseg_segmentation_free(seg);

        let mut seg = ptr::null_mut();
        assert_eq!(
            flexseg_segment_probabilistic(net, 3, 16, 0.5, 1, &mut seg),
            FlexsegStatus::Ok
        );
        let kept = flexseg_segmentation_len(seg);
        assert!(kept >= 1);
        assert_eq!(kept + flexseg_segmentation_discarded(seg), 3);
        assert!(flexseg_segmentation_envelope_area(seg) > 0.0);
        flexseg_segmentation_free(seg);
        flexseg_network_free(net);
    }
}

#[test]
fn version_is_a_static_string() {
    let v = unsafe { CStr::from_ptr(flexseg_version()) }
        .to_str()
        .unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
