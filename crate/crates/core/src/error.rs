//! Error type shared by every module of the crate.

use crate::abb::BlockKind;

/// Errors raised by block evaluation, spline math, training and the
/// experiment runners.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A block input fell outside the analog operating range.
    #[error("{block} input {value} outside the operating range [-{rail}, {rail}]")]
    RangeViolation {
        block: BlockKind,
        value: f64,
        rail: f64,
    },

    /// A block was called with the wrong number of operands.
    #[error("{block} expects {expected} operand(s)")]
    Arity { block: BlockKind, expected: usize },

    /// An input lies outside a spline or layer domain.
    #[error("x = {x} outside domain [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    /// A domain or configuration value is malformed.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Two sequences that must line up do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A metric was requested over a reference with zero range.
    #[error("reference signal has zero range")]
    DegenerateRange,

    /// A cost model assigns zero cost to the canonical pipeline.
    #[error("cost model gives the canonical pipeline zero {0} cost")]
    DegenerateCost(&'static str),

    /// Control points break the hardware constraints.
    #[error("infeasible control points: {0}")]
    Infeasible(String),

    /// Control points could not be brought into the feasible set.
    #[error("constraint projection failed for {0}")]
    Projection(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at iteration {iteration} (loss = {loss})")]
    Divergence { iteration: usize, loss: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
