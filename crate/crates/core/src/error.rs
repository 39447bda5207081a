//! Coarse classification of library errors for front ends (exit codes, C status codes).

use crate::distflow::OpfError;
use crate::geometry::GeometryError;
use crate::grid::GridError;
use crate::misocp::MisocpError;
use crate::segmentation::SegmentationError;
use crate::tracer::TraceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorClass {
    /// Malformed input that could not be read.
    Parse,
    /// Well-formed input that violates a model or argument constraint.
    Validation,
    /// The optimization problem has no feasible point.
    Infeasible,
    /// Solver breakdown, geometry failure or I/O trouble.
    Internal,
}

pub trait Classify {
    fn class(&self) -> ErrorClass;
}

impl Classify for GridError {
    fn class(&self) -> ErrorClass {
        if self.is_parse_error() {
            ErrorClass::Parse
        } else {
            ErrorClass::Validation
        }
    }
}

impl Classify for OpfError {
    fn class(&self) -> ErrorClass {
        match self {
            OpfError::InfeasibleWindow => ErrorClass::Infeasible,
            OpfError::Model(_) | OpfError::UnknownUnit(_) => ErrorClass::Validation,
            OpfError::Unbounded | OpfError::NotConverged { .. } | OpfError::Solver(_) => {
                ErrorClass::Internal
            }
        }
    }
}

impl Classify for MisocpError {
    fn class(&self) -> ErrorClass {
        match self {
            MisocpError::Infeasible => ErrorClass::Infeasible,
            MisocpError::Opf(o) => o.class(),
            MisocpError::ForcedConflict(_)
            | MisocpError::TooManyForced { .. }
            | MisocpError::LimitTooLarge { .. } => ErrorClass::Validation,
        }
    }
}

impl Classify for TraceError {
    fn class(&self) -> ErrorClass {
        match self {
            TraceError::Infeasible(_) | TraceError::AllIntervalsEmpty => ErrorClass::Infeasible,
            TraceError::InvalidArgument(_) => ErrorClass::Validation,
            TraceError::Opf(o) => o.class(),
            TraceError::Misocp(m) => m.class(),
            TraceError::Pool(_) => ErrorClass::Internal,
        }
    }
}

impl Classify for GeometryError {
    fn class(&self) -> ErrorClass {
        ErrorClass::Internal
    }
}

impl Classify for SegmentationError {
    fn class(&self) -> ErrorClass {
        match self {
            SegmentationError::Level { source, .. } => source.class(),
            SegmentationError::Trace(t) => t.class(),
            SegmentationError::Geometry(_) => ErrorClass::Internal,
            SegmentationError::NoUnits
            | SegmentationError::UnknownUnit(_)
            | SegmentationError::Capacity(_)
            | SegmentationError::InvalidArgument(_) => ErrorClass::Validation,
        }
    }
}

impl Classify for std::io::Error {
    fn class(&self) -> ErrorClass {
        ErrorClass::Internal
    }
}
