//! Minimal deterministic differentiable-compute core.
//!
//! Networks here are fixed-shape MLPs, so gradients are computed with
//! per-layer analytic backprop: each [`DenseLayer::forward`] returns a cache
//! that [`DenseLayer::backward`] consumes. All arithmetic is `f64`.

mod layer;
mod matrix;
mod optim;
mod rng;
mod schedule;

pub use layer::{ensure_finite_grads, Activation, DenseCache, DenseLayer, Mlp, MlpCache, Param};
pub use matrix::Matrix;
pub use optim::{AdamConfig, AdamState};
pub use rng::{derive_seed, sample_standard_normal, Rng};
pub use schedule::CyclicLrSchedule;
