//! Kernel interpolation viewed as a Bayes point machine for Gaussian-process
//! classification.
//!
//! The crate is organised bottom-up:
//!
//! - [`kernel`]: the compositional arccosine kernel (plus linear and RBF test kernels)
//!   and Gram matrix/vector construction.
//! - [`gram`]: jittered Cholesky factorization of the Gram matrix and the scalar
//!   functionals built on it (solves, log-determinant, trace of the inverse, RKHS norms).
//! - [`sampler`]: label vectors drawn from the orthant-truncated GP and isotropic posteriors.
//! - [`orthant`]: Gaussian orthant probabilities and the closed-form complexity measure.
//! - [`classifier`]: interpolation and the Gibbs, Bayes, BPM and margin-scaled predictors.
//! - [`bounds`]: PAC-Bayes, BPM, Rademacher and C-bound risk bounds.
//! - [`data`]: MNIST IDX ingestion, synthetic datasets, and persistence formats.
//! - [`experiment`]: one row of a bounds or comparison sweep.
//! - [`verify`]: fixed-scale empirical checks of the identities and inequalities.
//! - [`cli`]: the experiment driver behind the `kbpm` binary.

pub mod bounds;
pub mod classifier;
pub mod cli;
pub mod data;
mod error;
pub mod experiment;
pub mod gram;
pub mod kernel;
pub mod orthant;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};

/// Binary sign with the convention `sign(0) = +1`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}
