use thiserror::Error;

use crate::rootfind::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An evaluation of the estimating function produced NaN or an infinity.
    #[error("non-finite evaluation at point {point:?}")]
    NonFiniteEvaluation { point: Vec<f64> },

    #[error("singular Jacobian in linear solve (pivot {pivot:e} in column {column})")]
    SingularJacobian { column: usize, pivot: f64 },

    #[error("bread matrix is singular; the stacked system is not identified")]
    SingularBread,

    #[error(
        "root finder did not converge after {} iterations (residual {:e})",
        .report.iterations,
        .report.residual_norm
    )]
    NoConvergence { report: SolveReport },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("design matrix has rank {rank} but {columns} columns")]
    RankDeficientDesign { rank: usize, columns: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("inverse odds weights sum to zero over the sampled rows")]
    DegenerateWeights,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn dims(what: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected,
            found,
        }
    }
}
