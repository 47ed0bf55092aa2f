//! Truncated enriched Dirichlet process mixtures (EDPM) of normals.
//!
//! The response is regressed on covariates inside top-level θ-clusters, and
//! covariates are clustered again inside each θ-cluster (ψ-clusters). This
//! crate provides
//!
//! * [`bounds`]: the L1 truncation error bound and the minimal `(N, M)`
//!   truncation that meets a tolerance,
//! * [`gibbs`]: the blocked Gibbs sampler for the truncated model,
//! * [`urn`]: a marginal Pólya-urn sampler for the untruncated model,
//! * [`inference`]: posterior-predictive regression and conditional density,
//! * [`simstudy`]: the two-regime toy model and the accuracy / mixing
//!   evaluation protocols.

pub mod bounds;
pub mod chain;
pub mod error;
pub mod gibbs;
pub mod inference;
pub mod model;
pub mod rng;
pub mod simstudy;
pub mod stats;
pub mod urn;

pub use error::{EdpmError, Result};
