//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature could not reach the requested tolerance.
    ///
    /// Reported separately from domain errors so callers can distinguish
    /// "bad input" from "tolerance not attainable"; `context` names the
    /// integral (including the swap-distance cell where applicable).
    #[error("quadrature failed in {context}: error {error:.3e} after {subdivisions} subdivisions")]
    Quadrature {
        context: String,
        subdivisions: usize,
        error: f64,
    },

    /// Exact enumeration was requested for an orbit above the configured cap.
    #[error(
        "orbit too large for exact enumeration: log10(N) = {log10_orbit:.2} exceeds cap {cap}"
    )]
    OrbitTooLarge { log10_orbit: f64, cap: u64 },

    /// Input data is degenerate (zero variance, single class, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A z-score was requested with zero RMSE and unequal values.
    #[error(
        "z-score undefined: rmse is zero while p ({p}) differs from the estimate ({estimate})"
    )]
    InfiniteZScore { p: f64, estimate: f64 },

    /// Malformed input file.
    #[error("parse error in {path} (line {line}): {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Inconsistent caller-provided arguments.
    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
