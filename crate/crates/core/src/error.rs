use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::riemopt::FitReport;
use crate::symmat::SpdMat;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("tangent vector is not based at the given point")]
    BaseMismatch,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// An iterative mean did not reach its tolerance; `last` is the final iterate.
    #[error("did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        last: Box<SpdMat>,
    },

    /// The optimizer could not make progress on a finite cost.
    #[error("optimizer failure: {message}")]
    OptimizerFailure {
        message: String,
        report: Box<FitReport>,
    },

    /// Empirical covariance is not positive definite. Carries the mean and the raw covariance.
    #[error("singular covariance estimate")]
    SingularCovariance {
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
    },

    /// Failure attributed to one class of a classifier fit.
    #[error("class {class}: {source}")]
    Class {
        class: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn dim(expected: usize, found: usize) -> Self {
        Error::DimMismatch { expected, found }
    }

    /// True for errors caused by the caller's input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::InvalidInput(_)
            | Error::DomainError(_)
            | Error::DimMismatch { .. }
            | Error::BaseMismatch => true,
            Error::Class { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}
