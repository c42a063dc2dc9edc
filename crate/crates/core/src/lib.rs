//! Hierarchical Bayesian linear mixed models with global-local shrinkage
//! priors, fitted by Gibbs sampling.
//!
//! The model for group `i` and observation `j` is
//!
//! ```text
//! y_ij = x_ijᵀ β + u_i + ε_ij
//! ε_ij ~ N(0, 1 / (λ_i τ))        u_i ~ N(0, 1 / (ω_i φ))
//! ```
//!
//! with a flat prior on `β`, Gamma priors on the global precisions `τ` and
//! `φ`, and one of several local priors on `λ_i` and `ω_i`. The response is
//! the logit of the completeness of death registration.
//!
//! Modules, bottom-up:
//!
//! - [`data`]: panel ingestion and the logit transforms.
//! - [`design`]: covariate rows for the two model variants.
//! - [`kernels`]: seeded random variate generators.
//! - [`gibbs`]: the sampler itself.
//! - [`inference`]: posterior summaries, predictions, diagnostics and the
//!   shrinkage-factor quadrature checker.
//! - [`metrics`]: MAE, RMSE, R-square and the completeness-band breakdown.
//! - [`simulate`] and [`cli`]: synthetic panels and the batch front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod design;
pub mod error;
pub mod gibbs;
pub mod inference;
pub mod kernels;
pub mod metrics;
pub mod simulate;

pub use error::{Error, Result};
