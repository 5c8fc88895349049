use std::path::PathBuf;

use crate::linalg::SolverReport;

/// Errors produced anywhere in the solver pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate cell {cell}: determinant {det:e}")]
    DegenerateCell { cell: usize, det: f64 },

    #[error("unsupported quadrature degree {0} (supported: 1..=4)")]
    UnsupportedQuadrature(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("conflicting Dirichlet values for dof {dof}: {first} vs {second}")]
    ConflictingConstraint { dof: usize, first: f64, second: f64 },

    #[error("matrix is not positive definite (CG breakdown at iteration {iteration}, pAp = {curvature:e})")]
    NotPositiveDefinite { iteration: usize, curvature: f64 },

    #[error("missing diagonal entry in row {0}")]
    MissingDiagonal(usize),

    #[error("linear solve did not converge in {stage}: {report:?}")]
    SolverFailed { stage: String, report: SolverReport },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. } | Error::MissingDiagonal(_) | Error::SolverFailed { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
