//! Gaussian-process regression.
//!
//! Targets are standardized before fitting (zero mean, unit variance) and
//! every variance-like hyperparameter, including the fixed noise variance,
//! lives in those standardized units. Inputs are used as given; solvers feed
//! the model points scaled to the unit cube, which is what the default
//! lengthscale bounds assume.

mod gp;
mod kernel;

pub use gp::{cross_covariance, log_marginal_likelihood, GpConfig, GpModel, Hyperparams};
pub use kernel::KernelKind;
