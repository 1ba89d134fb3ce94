//! Monte Carlo experiments on `A + U*BU` with Haar-distributed `U`.

// Domain checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod report;
pub mod stats;

pub use ensemble::{
    diag_from_measure, haar_unitary, rotate_sum_spectrum, trial_seed, HermitianMatrix, SpectrumSample, UnitaryMatrix,
};
pub use error::{Error, Result};
pub use experiments::{
    empirical_ncm, estimate_resolvent_variance, freeness_moment, spectrum_samples, unitary_spectrum_check,
    Preconditions, ResolventVariance, VarianceReport,
};
pub use faer::{c64, Mat};
