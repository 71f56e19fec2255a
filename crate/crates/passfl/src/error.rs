//! Error types shared across the library.

use thiserror::Error;

/// Errors produced by the latency model, the straggler functional, and the
/// solvers built on top of them.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// `log2(1 + snr)` underflowed to zero; the client cannot close the link
    /// at this position under the given radio configuration.
    #[error("latency overflow for client {client_id} at x = {x} m: log2(1 + snr) underflowed")]
    OverflowLatency { client_id: usize, x: f64 },

    /// Two sequences that must share a dimension do not.
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// The straggler Hessian requires a sample size of at least 2.
    #[error("sample size K = {0} is too small (need K >= 2)")]
    KTooSmall(usize),

    /// A domain-type invariant was violated at construction.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// The convergence factor came out non-positive, so the wall-clock
    /// objective is meaningless for this parameter set.
    #[error("convergence factor g(q) = {0} is not positive")]
    NonPositiveG(f64),

    /// A statistical weight that must be strictly positive is not.
    #[error("weight at index {0} is not strictly positive")]
    NonPositiveWeight(usize),

    /// A slow-class mass outside the open unit interval.
    #[error("delta = {0} lies outside (0, 1)")]
    DeltaOutOfRange(f64),

    /// A gap index past the last adjacent pair.
    #[error("gap index {index} out of range for {n} clients")]
    IndexOutOfRange { index: usize, n: usize },

    /// Threshold margin parameters outside their admissible ranges.
    #[error("invalid threshold margin: {0}")]
    InvalidMargin(String),

    /// The queried position sits on (or too close to) an ordering breakpoint,
    /// where the envelope derivative is undefined.
    #[error("x = {x} m is within {tol} m of an ordering breakpoint")]
    OnBreakpoint { x: f64, tol: f64 },

    /// An iterative solver exhausted its budget without meeting its residual
    /// tolerance.
    #[error("solver did not converge: {0}")]
    DidNotConverge(String),

    /// The synthetic training loop hit its round cap before reaching the
    /// target accuracy.
    #[error("maximum number of rounds ({0}) exceeded before reaching target accuracy")]
    MaxRoundsExceeded(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
