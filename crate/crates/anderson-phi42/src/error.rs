use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad grid size, malformed config file, unknown keys).
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid argument to an operation (out-of-range index, grid mismatch).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Numerical failure (eigensolver breakdown, degenerate regression).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Time integration produced non-finite values.
    #[error("integration blew up at t = {time}: {context}")]
    Integration { time: f64, context: String },

    /// Fixed-point iteration failed to converge.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e}); {hint}")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        hint: String,
    },

    /// Snapshot or report file format problem.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
