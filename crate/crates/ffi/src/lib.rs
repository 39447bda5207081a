//! C ABI over the flexseg library.
//!
//! Objects cross the boundary as opaque handles created by `*_load`,
//! `*_trace` or `*_segment_*` functions and released with the matching
//! `*_free`. Every fallible call returns a [`FlexsegStatus`]; the message of
//! the last failure on the calling thread is available from
//! [`flexseg_last_error`]. Strings returned by the library are released with
//! [`flexseg_string_free`].

use flexseg::distflow::{
    initial_operating_point, solve_opf, ActivationContext, InterfaceWindow, ObjectiveDirection,
};
use flexseg::error::{Classify, ErrorClass};
use flexseg::grid::{bundled_network, load_network, network_from_json, Network};
use flexseg::render::render_segmentation;
use flexseg::segmentation::{
    segment_by_count, segment_probabilistic, ProbabilisticOptions, Segmentation,
};
use flexseg::tracer::{trace_epsilon_with, FlexArea, TraceOptions};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlexsegStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Input could not be read or parsed.
    Parse = 3,
    /// Input or arguments violate a model constraint.
    Validation = 4,
    /// The problem has no feasible operating point.
    Infeasible = 5,
    /// Solver or geometry failure.
    Internal = 6,
    /// An index was past the end of a collection.
    OutOfRange = 7,
    /// The library panicked; the handle arguments should be considered lost.
    Panic = 8,
}

/// Opaque network handle.
pub struct FlexsegNetwork {
    inner: Network,
}

/// Opaque traced flexibility area.
pub struct FlexsegArea {
    inner: FlexArea,
}

/// Opaque segmentation result.
pub struct FlexsegSegmentation {
    inner: Segmentation,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

struct Failure(FlexsegStatus, String);

impl<E: Classify + std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        let status = match e.class() {
            ErrorClass::Parse => FlexsegStatus::Parse,
            ErrorClass::Validation => FlexsegStatus::Validation,
            ErrorClass::Infeasible => FlexsegStatus::Infeasible,
            ErrorClass::Internal => FlexsegStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(FlexsegStatus::NullArgument, format!("{what} is null"))
}

/// Runs `f`, records any failure and converts panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FlexsegStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FlexsegStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            FlexsegStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure(FlexsegStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(h: *const T, what: &str) -> Result<&'a T, Failure> {
    h.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn opts(workers: usize) -> TraceOptions {
    if workers == 0 {
        TraceOptions::default()
    } else {
        TraceOptions { workers }
    }
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .expect("nul bytes removed")
        .into_raw()
}

/// Message of the last failed call on this thread (empty after a success).
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn flexseg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn flexseg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn flexseg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a bundled network by name (`case33`) or a network file by path.
///
/// # Safety
/// `name_or_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flexseg_network_load(
    name_or_path: *const c_char,
    out: *mut *mut FlexsegNetwork,
) -> FlexsegStatus {
    guard(|| {
        let name = str_arg(name_or_path, "name_or_path")?;
        let net = match bundled_network(name) {
            Some(n) => n,
            None => load_network(name)?,
        };
        put(
            out,
            Box::into_raw(Box::new(FlexsegNetwork { inner: net })),
            "out",
        )
    })
}

/// Parses a network document held in memory.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flexseg_network_from_json(
    json: *const c_char,
    out: *mut *mut FlexsegNetwork,
) -> FlexsegStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let net = network_from_json(text, "network")?;
        put(
            out,
            Box::into_raw(Box::new(FlexsegNetwork { inner: net })),
            "out",
        )
    })
}

/// # Safety
/// `net` must be null or a handle from this library that was not freed.
#[no_mangle]
pub unsafe extern "C" fn flexseg_network_free(net: *mut FlexsegNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of buses, 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flexseg_network_bus_count(net: *const FlexsegNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.inner.buses.len())
}

/// Number of flexible units, 0 for a null handle.
///
/// # Safety
/// `net` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flexseg_network_unit_count(net: *const FlexsegNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.inner.flex_units.len())
}

/// Replaces the reliability of one unit.
///
/// # Safety
/// `net` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn flexseg_network_set_reliability(
    net: *mut FlexsegNetwork,
    unit: i64,
    reliability: f64,
) -> FlexsegStatus {
    guard(|| {
        let n = net.as_mut().ok_or_else(|| null("net"))?;
        n.inner = n.inner.with_reliability(unit, reliability)?;
        Ok(())
    })
}

/// Interface exchange with every flexible unit off, kW / kVAr.
///
/// # Safety
/// `net` must be a live handle; `p` and `q` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flexseg_reference_point(
    net: *const FlexsegNetwork,
    p: *mut f64,
    q: *mut f64,
) -> FlexsegStatus {
    guard(|| {
        let n = handle(net, "net")?;
        let op = initial_operating_point(&n.inner)?;
        put(p, op.interface_p, "p")?;
        put(q, op.interface_q, "q")
    })
}

/// Optimal power flow with all units available, minimizing
/// `pi_p P + pi_q Q` at the interface (coefficients in {-1, 0, 1}).
///
/// # Safety
/// `net` must be a live handle; `p` and `q` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flexseg_opf(
    net: *const FlexsegNetwork,
    pi_p: i8,
    pi_q: i8,
    p: *mut f64,
    q: *mut f64,
) -> FlexsegStatus {
    guard(|| {
        let n = handle(net, "net")?;
        let dir = ObjectiveDirection::new(pi_p, pi_q)?;
        let op = solve_opf(
            &n.inner,
            dir,
            &ActivationContext::all_units(&n.inner),
            &InterfaceWindow::default(),
        )?;
        put(p, op.interface_p, "p")?;
        put(q, op.interface_q, "q")
    })
}

/// Traces the aggregated area with `k` ε-intervals. `workers == 0` uses
/// every available core.
///
/// # Safety
/// `net` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flexseg_trace_area(
    net: *const FlexsegNetwork,
    k: usize,
    workers: usize,
    out: *mut *mut FlexsegArea,
) -> FlexsegStatus {
    guard(|| {
        let n = handle(net, "net")?;
        let area = trace_epsilon_with(
            &n.inner,
            &ActivationContext::all_units(&n.inner),
            k,
            &opts(workers),
        )?;
        put(
            out,
            Box::into_raw(Box::new(FlexsegArea { inner: area })),
            "out",
        )
    })
}

/// # Safety
/// `area` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flexseg_area_free(area: *mut FlexsegArea) {
    if !area.is_null() {
        drop(Box::from_raw(area));
    }
}

/// Number of boundary points, 0 for a null handle.
///
/// # Safety
/// `area` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flexseg_area_len(area: *const FlexsegArea) -> usize {
    area.as_ref().map_or(0, |a| a.inner.boundary.len())
}

/// Boundary point `index` in counterclockwise order, kW / kVAr.
///
/// # Safety
/// `area` must be a live handle; `p` and `q` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flexseg_area_point(
    area: *const FlexsegArea,
    index: usize,
    p: *mut f64,
    q: *mut f64,
) -> FlexsegStatus {
    guard(|| {
        let a = handle(area, "area")?;
        let b = a.inner.boundary.get(index).ok_or_else(|| {
            Failure(
                FlexsegStatus::OutOfRange,
                format!("point {index} of {}", a.inner.boundary.len()),
            )
        })?;
        put(p, b.p, "p")?;
        put(q, b.q, "q")
    })
}

/// Area of the convex hull of the boundary, kW·kVAr; NaN for a null handle.
///
/// # Safety
/// `area` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flexseg_area_hull_area(area: *const FlexsegArea) -> f64 {
    area.as_ref().map_or(f64::NAN, |a| a.inner.hull().area())
}

/// Segments by the number of active units, levels 0 through n.
///
/// # Safety
/// `net` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flexseg_segment_by_count(
    net: *const FlexsegNetwork,
    k: usize,
    workers: usize,
    out: *mut *mut FlexsegSegmentation,
) -> FlexsegStatus {
    guard(|| {
        let n = handle(net, "net")?;
        let seg = segment_by_count(&n.inner, k, &opts(workers))?;
        put(
            out,
            Box::into_raw(Box::new(FlexsegSegmentation { inner: seg })),
            "out",
        )
    })
}

/// Segments by ranked unit subsets. `threshold <= 0` skips the envelope.
///
/// # Safety
/// `net` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flexseg_segment_probabilistic(
    net: *const FlexsegNetwork,
    k: usize,
    max_segments: usize,
    threshold: f64,
    workers: usize,
    out: *mut *mut FlexsegSegmentation,
) -> FlexsegStatus {
    guard(|| {
        let n = handle(net, "net")?;
        let popts = ProbabilisticOptions {
            k,
            max_segments,
            threshold: (threshold > 0.0).then_some(threshold),
            ..Default::default()
        };
        let seg = segment_probabilistic(&n.inner, &popts, &opts(workers))?;
        put(
            out,
            Box::into_raw(Box::new(FlexsegSegmentation { inner: seg })),
            "out",
        )
    })
}

/// # Safety
/// `seg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flexseg_segmentation_free(seg: *mut FlexsegSegmentation) {
    if !seg.is_null() {
        drop(Box::from_raw(seg));
    }
}

/// Number of retained segments, 0 for a null handle.
///
/// # Safety
/// `seg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flexseg_segmentation_len(seg: *const FlexsegSegmentation) -> usize {
    seg.as_ref().map_or(0, |s| s.inner.segments.len())
}

/// Number of subsets discarded as redundant, 0 for a null handle.
///
/// # Safety
/// `seg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flexseg_segmentation_discarded(seg: *const FlexsegSegmentation) -> usize {
    seg.as_ref().map_or(0, |s| s.inner.discarded.len())
}

/// Cardinality, firmness and polygon area of segment `index`.
///
/// # Safety
/// `seg` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn flexseg_segment_info(
    seg: *const FlexsegSegmentation,
    index: usize,
    cardinality: *mut usize,
    probability: *mut f64,
    area: *mut f64,
) -> FlexsegStatus {
    guard(|| {
        let s = handle(seg, "seg")?;
        let segment = s.inner.segments.get(index).ok_or_else(|| {
            Failure(
                FlexsegStatus::OutOfRange,
                format!("segment {index} of {}", s.inner.segments.len()),
            )
        })?;
        put(cardinality, segment.cardinality, "cardinality")?;
        put(probability, segment.probability, "probability")?;
        put(area, segment.polygon.area(), "area")
    })
}

/// Area of the firmness envelope; NaN when none was requested.
///
/// # Safety
/// `seg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flexseg_segmentation_envelope_area(
    seg: *const FlexsegSegmentation,
) -> f64 {
    seg.as_ref()
        .and_then(|s| s.inner.envelope.as_ref())
        .map_or(f64::NAN, |e| e.area())
}

/// Segmentation as a JSON document; null on a null handle. Release with
/// [`flexseg_string_free`].
///
/// # Safety
/// `seg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flexseg_segmentation_to_json(
    seg: *const FlexsegSegmentation,
) -> *mut c_char {
    match seg.as_ref() {
        Some(s) => into_c_string(s.inner.to_json()),
        None => ptr::null_mut(),
    }
}

/// SVG chart of the segmentation around the reference point; null on a null
/// handle. Release with [`flexseg_string_free`].
///
/// # Safety
/// `seg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flexseg_segmentation_svg(
    seg: *const FlexsegSegmentation,
    reference_p: f64,
    reference_q: f64,
) -> *mut c_char {
    match seg.as_ref() {
        Some(s) => into_c_string(render_segmentation(&s.inner, (reference_p, reference_q))),
        None => ptr::null_mut(),
    }
}

#[cfg(test)]
mod tests;
