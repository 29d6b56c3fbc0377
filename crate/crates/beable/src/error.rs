//! Error types shared across the crate.

use thiserror::Error;

/// Unified error type. Variants mirror the failure classes of the public
/// operations; [`Error::exit_code`] maps them onto process exit codes for the
/// command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension product exceeds the configured maximum.
    #[error("size error: {0}")]
    Size(String),
    /// Operands have inconsistent or malformed shapes.
    #[error("shape error: {0}")]
    Shape(String),
    /// A numerical tolerance was violated (non-Hermitian input, drift, ...).
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Invalid configuration (indivisible grids, bad schedules, bad flags).
    #[error("config error: {0}")]
    Config(String),
    /// Input outside the mathematical domain (e.g. non-PSD density matrix).
    #[error("domain error: {0}")]
    Domain(String),
    /// An occupied source cell has drained below the occupation threshold.
    #[error("starvation: {0}")]
    Starvation(String),
    /// Coefficient matrix is not normal, so no unitary can diagonalize it.
    #[error("not normal: {0}")]
    NotNormal(String),
    /// Supplied operators do not close into the expected algebra.
    #[error("algebra error: {0}")]
    Algebra(String),
    /// Requested window lies outside the available data.
    #[error("range error: {0}")]
    Range(String),
    /// Least-squares fit failed (non-monotone data, too few points, ...).
    #[error("fit error: {0}")]
    Fit(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numerical(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
