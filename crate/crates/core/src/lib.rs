//! Bayesian effect fusion for categorical predictors in linear regression.
//!
//! Level effects of each categorical covariate get a spike-and-slab prior on
//! all (or a restricted set of) pairwise differences. A Gibbs sampler draws
//! from the joint posterior, and a final model is chosen per covariate by
//! minimizing the posterior expected Binder loss over partitions of its
//! levels, followed by a flat-prior refit of the fused model.
//!
//! Modules:
//! - [`design`]: covariate specs, fusion patterns, dummy coding, CSV input.
//! - [`prior`]: structure matrices, indicator prior, prior diagnostics.
//! - [`gibbs`]: the sampler, stored draws and autocorrelation diagnostics.
//! - [`select`]: similarity matrices, Binder minimization and refit.
//! - [`simstudy`]: synthetic benchmark generator and selection metrics.

pub mod design;
pub mod dist;
pub mod error;
pub mod exec;
pub mod gibbs;
pub mod linalg;
pub mod prior;
pub mod rng;
pub mod select;
pub mod simstudy;

pub use error::{ErrorClass, FusionError, Result};
pub use exec::Exec;
