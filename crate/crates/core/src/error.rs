//! Crate-wide error type.

use thiserror::Error;

/// Errors reported by the recovery library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A vector or matrix had the wrong dimension for the requested operation.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A non-finite value (NaN or infinity) reached a constructor boundary.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// The supplied metric is not symmetric positive-definite.
    #[error("invalid metric: {0}")]
    BadMetric(&'static str),

    /// Linearly dependent inputs, or a cross-Gramian with a vanishing
    /// singular value: no stable recovery is possible (β = 0).
    #[error("rank deficient: {0}")]
    RankDeficient(&'static str),

    /// The tolerance sequence is not positive and non-increasing.
    #[error("invalid tolerance sequence: {0}")]
    BadTolerances(&'static str),

    /// The data-consistent set is empty at the requested level: the recovery
    /// defect exceeds the tolerance.
    #[error("infeasible: defect {defect} exceeds tolerance {eps}")]
    Infeasible { defect: f64, eps: f64 },

    /// The budget index selected a coordinate with a vanishing box bound.
    #[error("vanishing coordinate bound at selected index {0}")]
    DegenerateTheta(usize),

    /// Exhaustive subset search was requested for a hierarchy too deep to
    /// enumerate.
    #[error("exhaustive subset search supports n <= {max}, got n = {n}")]
    SubsetTooLarge { n: usize, max: usize },

    /// A per-level stability constant is infinite, so the a posteriori bound
    /// is unavailable.
    #[error("stability constant is infinite at level {0}")]
    InfiniteMu(usize),

    /// A point required to lie in the model set K does not.
    #[error("point outside the model set at level {level}: distance {dist} > {eps}")]
    NotInK { level: usize, dist: f64, eps: f64 },

    /// A prescribed singular-value spectrum violates its constraints.
    #[error("invalid spectrum: {0}")]
    BadSpectrum(&'static str),

    /// The incoherent-instance generator needs a power-of-two dimension.
    #[error("dimension must be a power of two, got {0}")]
    NotPowerOfTwo(usize),

    /// Malformed matrix text or problem data.
    #[error("parse error: {0}")]
    Parse(String),
}
