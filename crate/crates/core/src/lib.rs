//! Normative modeling with conditional variational autoencoders and
//! latent-space adversarial regularization.
//!
//! The crate is organized bottom-up:
//!
//! - [`diffcore`]: dense layers, analytic backprop, Adam, cyclic learning
//!   rates and a seeded sampler.
//! - [`datapipe`]: ROI table ingestion, covariate encoding, scaling, splits
//!   and synthetic cohorts.
//! - [`models`]: the AE / VAE / CVAE / AAE / ACVAE model zoo and its losses.
//! - [`trainer`]: mini-batch training with alternating adversarial updates
//!   and architecture screening.
//! - [`evaluator`]: deviation maps, ROC-AUC, effect sizes and the repeated
//!   split protocol.
//!
//! Independent runs (bootstrap repeats, effect-size regions) fan out through
//! [`parallel`], which uses rayon when the `parallel` feature is enabled and
//! falls back to a sequential loop otherwise.

pub mod datapipe;
pub mod diffcore;
pub mod error;
pub mod evaluator;
pub mod models;
pub mod parallel;
pub mod trainer;

pub use error::{Error, Result};
