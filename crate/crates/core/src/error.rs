use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    /// Raised when a missing-data design leaves no parameter with a
    /// well-defined boundary (missingness probability one almost everywhere).
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid bandwidth: {0} (need 0 < h < 1)")]
    InvalidBandwidth(f64),

    /// The kernel estimate has an empty window at the requested point.
    /// Statistics treat such points as contributing zero.
    #[error("no data in kernel window at x = {0}")]
    NoDataInWindow(f64),

    #[error("unsupported spec: {0}")]
    UnsupportedSpec(String),

    /// A statistic was compared against a critical value simulated under a
    /// different specification.
    #[error("spec mismatch: statistic fingerprint {stat} != critical value fingerprint {critval}")]
    SpecMismatch { stat: String, critval: String },

    /// Quadrature truncation failed to enclose the support of the integrand.
    #[error(
        "quadrature domain too small: boundary contribution {boundary:.3e} exceeds tolerance {tol:.3e}"
    )]
    EnlargeDomain { boundary: f64, tol: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
