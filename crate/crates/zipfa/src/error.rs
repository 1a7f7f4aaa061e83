//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input data (files, matrices, flags).
    #[error("input error: {0}")]
    Input(String),

    /// An argument violated a documented precondition.
    #[error("argument error: {0}")]
    Argument(String),

    /// A non-finite value or a failed factorization inside a numeric routine.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An iterative solver hit its iteration cap without meeting its tolerance.
    #[error("no convergence after {iterations} iterations: {context}")]
    NoConvergence { iterations: usize, context: String },

    /// A column has no nonzero observed entries, so it cannot be imputed.
    #[error("degenerate column {index} ({label}): no nonzero observed entries")]
    DegenerateColumn { index: usize, label: String },

    /// Repeated redraws could not produce a fold partition that keeps every
    /// row and column partially observed.
    #[error("cannot partition {n}x{m} cells into {folds} folds: {reason}")]
    PartitionInfeasible {
        n: usize,
        m: usize,
        folds: usize,
        reason: String,
    },

    /// Bisection could not reach the requested zero fraction.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// Rank selection had no valid candidate left.
    #[error("selection error: {0}")]
    Selection(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
