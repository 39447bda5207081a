//! Segmentation of the flexibility area by activation count and by
//! reliability-ranked unit subsets.

use crate::distflow::ActivationContext;
use crate::geometry::{self, contains, uncovered_fraction, GeometryError, Polygon, PolygonSet};
use crate::grid::{Network, UnitId};
use crate::tracer::{trace_epsilon_in, FlexArea, TraceError, TraceOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use thiserror::Error;

/// Residual-area fraction below which a polygon counts as contained.
pub const CONTAINMENT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_SEGMENTS: usize = 256;
/// Largest unit count for which the full subset ranking is produced.
pub const MAX_UNCAPPED_UNITS: usize = 20;

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error("the network has no flexible units")]
    NoUnits,
    #[error("unknown flexible unit id {0}")]
    UnknownUnit(UnitId),
    #[error("ranking all subsets of {0} units needs a cap (at most {MAX_UNCAPPED_UNITS} units uncapped)")]
    Capacity(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("level {level}: {source}")]
    Level {
        level: usize,
        #[source]
        source: TraceError,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentationMode {
    ByCount,
    Probabilistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Unit ids; empty in by-count mode, where only the cardinality is fixed.
    pub subset: BTreeSet<UnitId>,
    pub cardinality: usize,
    pub polygon: Polygon,
    pub probability: f64,
    /// Boundary points that carried an exactness or sweep warning.
    pub flagged_points: usize,
    /// ε-intervals that produced no point.
    pub empty_intervals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discarded {
    pub subset: BTreeSet<UnitId>,
    pub probability: f64,
    /// Fraction of its area outside the retained union when it was discarded.
    pub uncovered: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetFailure {
    pub subset: BTreeSet<UnitId>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub mode: SegmentationMode,
    pub segments: Vec<Segment>,
    pub discarded: Vec<Discarded>,
    pub failures: Vec<SubsetFailure>,
    pub threshold: Option<f64>,
    /// Union of retained segments whose probability reaches the threshold.
    pub envelope: Option<PolygonSet>,
    /// By-count mode: fraction of each traced level outside the next traced
    /// level, before the levels are merged into a nested chain.
    pub nesting_residuals: Vec<f64>,
}

impl Segmentation {
    pub fn discarded_count(&self) -> usize {
        self.discarded.len()
    }

    /// Union of all retained segments.
    pub fn aggregated(&self) -> Result<PolygonSet, GeometryError> {
        union_all(self.segments.iter().map(|s| &s.polygon))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("segmentation serializes")
    }
}

fn union_all<'a>(
    polys: impl IntoIterator<Item = &'a Polygon>,
) -> Result<PolygonSet, GeometryError> {
    let mut acc = PolygonSet::default();
    for p in polys {
        if p.is_degenerate() {
            continue;
        }
        acc = geometry::union(&acc, &p.into())?;
    }
    Ok(acc)
}

fn segment_from(
    area: &FlexArea,
    subset: BTreeSet<UnitId>,
    cardinality: usize,
    probability: f64,
) -> Segment {
    Segment {
        subset,
        cardinality,
        polygon: area.polygon(),
        probability,
        flagged_points: area.flagged().count(),
        empty_intervals: area.gaps.len(),
    }
}

/// Activation context of by-count level `m`.
fn level_context(net: &Network, m: usize) -> ActivationContext {
    let n = net.flex_units.len();
    if m == 0 {
        ActivationContext::Off
    } else if m == n && net.flex_units.iter().all(|u| u.contains_origin()) {
        // With every box containing the origin, "at most n" equals "all".
        ActivationContext::all_units(net)
    } else {
        ActivationContext::Relaxed {
            cardinality_limit: Some(m),
        }
    }
}

/// Traces by-count level `m` (at most `m` units active).
pub fn trace_level(
    net: &Network,
    m: usize,
    k: usize,
    opts: &TraceOptions,
) -> Result<FlexArea, SegmentationError> {
    if m > net.flex_units.len() {
        return Err(SegmentationError::InvalidArgument(format!(
            "level {m} exceeds {} units",
            net.flex_units.len()
        )));
    }
    crate::tracer::trace_epsilon_with(net, &level_context(net, m), k, opts)
        .map_err(|source| SegmentationError::Level { level: m, source })
}

/// Segments by the number of activated units, levels `0..=n`.
///
/// Each traced level is merged with the previous one, so the returned
/// polygons are nested by construction; the raw residuals are kept in
/// [`Segmentation::nesting_residuals`].
pub fn segment_by_count(
    net: &Network,
    k: usize,
    opts: &TraceOptions,
) -> Result<Segmentation, SegmentationError> {
    let n = net.flex_units.len();
    if n == 0 {
        return Err(SegmentationError::NoUnits);
    }
    let mut segments: Vec<Segment> = Vec::with_capacity(n + 1);
    let mut traced: Vec<Polygon> = Vec::with_capacity(n + 1);
    for m in 0..=n {
        let area = trace_level(net, m, k, opts)?;
        let mut seg = segment_from(&area, BTreeSet::new(), m, 1.0);
        traced.push(seg.polygon.clone());
        if let Some(prev) = segments.last() {
            if !contains(&(&seg.polygon).into(), &prev.polygon, CONTAINMENT_TOL)? {
                let merged = geometry::union(&(&seg.polygon).into(), &(&prev.polygon).into())?;
                if let Some(p) = merged.largest() {
                    log::debug!("level {m} merged with level {}", m - 1);
                    seg.polygon = p;
                }
            }
        }
        segments.push(seg);
    }
    let nesting_residuals = traced
        .windows(2)
        .map(|w| uncovered_fraction(&(&w[1]).into(), &w[0]))
        .collect::<Result<_, _>>()?;
    Ok(Segmentation {
        mode: SegmentationMode::ByCount,
        segments,
        discarded: Vec::new(),
        failures: Vec::new(),
        threshold: None,
        envelope: None,
        nesting_residuals,
    })
}

/// Product of the subset's reliabilities, taken in descending reliability
/// order (ties by id). The fixed order makes subsets that differ only by
/// equally reliable units bitwise equal and keeps every product monotone
/// under adding or downgrading a unit, which the exact ranking relies on.
pub fn subset_probability(
    subset: &BTreeSet<UnitId>,
    net: &Network,
) -> Result<f64, SegmentationError> {
    let mut rs = subset
        .iter()
        .map(|&id| {
            let u = net
                .unit_index(id)
                .ok_or(SegmentationError::UnknownUnit(id))?;
            Ok(net.flex_units[u].reliability)
        })
        .collect::<Result<Vec<f64>, SegmentationError>>()?;
    rs.sort_by(|a, b| b.total_cmp(a));
    Ok(rs.iter().product())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSubset {
    pub subset: BTreeSet<UnitId>,
    pub probability: f64,
}

/// Total order of the ranking: probability descending, then cardinality,
/// then lexicographic ids.
pub fn rank_order(a: &RankedSubset, b: &RankedSubset) -> Ordering {
    b.probability
        .total_cmp(&a.probability)
        .then(a.subset.len().cmp(&b.subset.len()))
        .then_with(|| a.subset.iter().cmp(b.subset.iter()))
}

/// Heap entry: positions into the reliability-sorted unit list.
struct Candidate {
    ranked: RankedSubset,
    positions: Vec<usize>,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap pops the greatest, so the first in rank order is greatest.
        rank_order(&other.ranked, &self.ranked)
    }
}

/// Non-empty unit subsets in rank order, at most `cap` of them.
///
/// Best-first over the tree where a subset (as sorted positions in the
/// reliability order) spawns "append the next unit" and "replace the last
/// unit by the next one"; both children rank after their parent, so popping
/// in rank order yields the exact ranking without full enumeration.
pub fn rank_subsets(
    net: &Network,
    cap: Option<usize>,
) -> Result<Vec<RankedSubset>, SegmentationError> {
    let n = net.flex_units.len();
    if n == 0 {
        return Err(SegmentationError::NoUnits);
    }
    if cap.is_none() && n > MAX_UNCAPPED_UNITS {
        return Err(SegmentationError::Capacity(n));
    }
    let total = if n >= usize::BITS as usize {
        usize::MAX
    } else {
        (1usize << n) - 1
    };
    let limit = cap.unwrap_or(total).min(total);
    let mut order: Vec<usize> = (0..n).collect();
    let units = &net.flex_units;
    order.sort_by(|&a, &b| {
        units[b]
            .reliability
            .total_cmp(&units[a].reliability)
            .then(units[a].id.cmp(&units[b].id))
    });
    let make = |positions: Vec<usize>| -> Candidate {
        let subset: BTreeSet<UnitId> = positions.iter().map(|&p| units[order[p]].id).collect();
        let probability = subset_probability(&subset, net).expect("ids come from the network");
        Candidate {
            ranked: RankedSubset {
                subset,
                probability,
            },
            positions,
        }
    };
    let mut heap = BinaryHeap::new();
    heap.push(make(vec![0]));
    let mut out = Vec::with_capacity(limit.min(1 << 16));
    while out.len() < limit {
        let Some(c) = heap.pop() else { break };
        let last = *c.positions.last().expect("non-empty");
        if last + 1 < n {
            let mut append = c.positions.clone();
            append.push(last + 1);
            heap.push(make(append));
            let mut replace = c.positions.clone();
            *replace.last_mut().expect("non-empty") = last + 1;
            heap.push(make(replace));
        }
        out.push(c.ranked);
    }
    Ok(out)
}

/// Options of the probabilistic segmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilisticOptions {
    pub k: usize,
    /// Number of ranked subsets considered.
    pub max_segments: usize,
    pub threshold: Option<f64>,
    /// Uncovered area fraction below which a subset counts as contained.
    pub containment_tol: f64,
}

impl Default for ProbabilisticOptions {
    fn default() -> Self {
        Self {
            k: 50,
            max_segments: DEFAULT_MAX_SEGMENTS,
            threshold: None,
            containment_tol: CONTAINMENT_TOL,
        }
    }
}

/// Segments by ranked subsets, discarding any subset whose area adds nothing
/// to the union of the more probable ones.
pub fn segment_probabilistic(
    net: &Network,
    popts: &ProbabilisticOptions,
    opts: &TraceOptions,
) -> Result<Segmentation, SegmentationError> {
    if popts.max_segments < 1 {
        return Err(SegmentationError::InvalidArgument(
            "max_segments must be at least 1".into(),
        ));
    }
    if let Some(t) = popts.threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(SegmentationError::InvalidArgument(format!(
                "threshold {t} outside [0, 1]"
            )));
        }
    }
    if !(popts.containment_tol >= 0.0) {
        return Err(SegmentationError::InvalidArgument(
            "containment tolerance must be non-negative".into(),
        ));
    }
    let ranked = rank_subsets(net, Some(popts.max_segments))?;
    let traces: Vec<Result<FlexArea, TraceError>> = opts.run(|| {
        ranked
            .par_iter()
            .map(|r| {
                trace_epsilon_in(
                    net,
                    &ActivationContext::FixedSubset {
                        subset: r.subset.clone(),
                    },
                    popts.k,
                )
            })
            .collect()
    })?;
    let mut segments: Vec<Segment> = Vec::new();
    let mut discarded = Vec::new();
    let mut failures = Vec::new();
    let mut union = PolygonSet::default();
    for (r, trace) in ranked.into_iter().zip(traces) {
        let area = match trace {
            Ok(a) => a,
            Err(e) => {
                log::warn!("subset {:?} failed: {e}", r.subset);
                failures.push(SubsetFailure {
                    subset: r.subset,
                    error: e.to_string(),
                });
                continue;
            }
        };
        let seg = segment_from(&area, r.subset.clone(), r.subset.len(), r.probability);
        if !segments.is_empty() {
            let uncovered = uncovered_fraction(&union, &seg.polygon)?;
            let covered = if seg.polygon.is_degenerate() {
                uncovered == 0.0
            } else {
                uncovered < popts.containment_tol
            };
            if covered {
                discarded.push(Discarded {
                    subset: r.subset,
                    probability: r.probability,
                    uncovered,
                });
                continue;
            }
        }
        if !seg.polygon.is_degenerate() {
            union = geometry::union(&union, &(&seg.polygon).into())?;
        }
        segments.push(seg);
    }
    let envelope = match popts.threshold {
        Some(t) => Some(union_all(
            segments
                .iter()
                .filter(|s| s.probability >= t)
                .map(|s| &s.polygon),
        )?),
        None => None,
    };
    Ok(Segmentation {
        mode: SegmentationMode::Probabilistic,
        segments,
        discarded,
        failures,
        threshold: popts.threshold,
        envelope,
        nesting_residuals: Vec::new(),
    })
}

#[cfg(test)]
mod tests;
