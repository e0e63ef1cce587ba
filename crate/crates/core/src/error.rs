use thiserror::Error;

use crate::plan::PlanResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported family: {0}")]
    UnsupportedFamily(String),

    #[error("{what} index {index} out of range 1..={max}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        max: usize,
    },

    #[error("expected a state with {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operation requires the {0} space")]
    WrongSpace(&'static str),

    #[error("configuration is not separated: gap {gap} has clearance {clearance}")]
    NotSeparated { gap: usize, clearance: f64 },

    #[error("{0} lies outside the separated region")]
    OutsideRegion(&'static str),

    #[error("invalid control schedule: {0}")]
    InvalidSchedule(String),

    #[error("non-finite state encountered at t = {time}")]
    NonFinite { time: f64 },

    #[error("field frame is singular at the current point")]
    Singular,

    #[error("damping underflow after {} iterations: no admissible step, residual {}", .best.iterations, .best.endpoint_error)]
    DampingUnderflow { best: Box<PlanResult> },

    #[error("planner did not converge: residual {} after {} iterations", .best.endpoint_error, .best.iterations)]
    NotConverged { best: Box<PlanResult> },
}
