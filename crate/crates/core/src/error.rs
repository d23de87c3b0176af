use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row {row}, column '{column}': {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is singular or ill-conditioned (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("collinear regressors '{first}' and '{second}' (condition number {condition:.3e})")]
    Collinear {
        first: String,
        second: String,
        condition: f64,
    },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("no convergence after {iterations} iterations (best objective {best:.6e})")]
    NoConvergence { iterations: usize, best: f64 },

    #[error("portfolio ruined at period {period}: gross return {gross:.6e}")]
    Ruin { period: usize, gross: f64 },

    #[error("tangent portfolio at infinity: weights do not normalize (sum {sum:.3e})")]
    TangencyAtInfinity { sum: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
