//! Free additive convolution of spectral measures.
//!
//! Given the limiting spectral laws of two Hermitian matrices `A` and `B`,
//! [`solver::free_convolve`] computes the limiting spectral law of
//! `A + U*BU` for Haar-distributed unitary `U` by solving the subordination
//! system on a grid above the real axis and inverting the Stieltjes
//! transform. [`closed_forms`] holds exact solutions used as oracles.

// Domain checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_forms;
pub mod error;
pub mod io;
pub mod measures;
pub mod solver;

pub use error::{Error, Result};
pub use measures::{HalfPlanePoint, Measure, NevanlinnaProbe, StieltjesTransform};
pub use solver::{
    check_r_additivity, detect_atoms, free_convolve, r_transform_eval, recover_density, solve_at_point, solve_on_grid,
    DensityEstimate, SolverConfig, SubordinationState,
};
