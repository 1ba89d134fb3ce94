use num_complex::Complex64;
use thiserror::Error;

use crate::solver::SubordinationState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (real spectral
    /// parameter, bad tolerance, inconsistent grid, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    /// The subordination iteration did not reach the requested residual.
    /// `best` is the lowest-residual state seen.
    #[error(
        "subordination solve did not converge at z = {}{:+}i after {} iterations (residual {:.3e})",
        best.z.re, best.z.im, best.iterations, best.residual
    )]
    NonConvergence { best: Box<SubordinationState> },

    /// A scalar fixed-point or Newton solve failed.
    #[error("{what} did not converge at z = {}{:+}i (residual {residual:.3e} after {iterations} iterations)", z.re, z.im)]
    ScalarNonConvergence { what: &'static str, z: Complex64, value: Complex64, residual: f64, iterations: usize },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn measure(msg: impl Into<String>) -> Self {
        Error::InvalidMeasure(msg.into())
    }
}
