//! The five normative models and their losses.
//!
//! | variant | conditioned on covariates | latent | discriminator |
//! |---------|---------------------------|--------|---------------|
//! | AE      | no                        | point  | no            |
//! | VAE     | no                        | Gaussian | no          |
//! | CVAE    | yes                       | Gaussian | no          |
//! | AAE     | yes                       | point  | yes           |
//! | ACVAE   | yes                       | Gaussian | yes         |
//!
//! All variants share one [`NormativeModel`] type; the variant only decides
//! which heads exist and which loss terms are active.

mod checkpoint;
mod config;
mod losses;
mod network;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{AdvTarget, ModelConfig, ModelSettings, Variant};
pub use losses::{
    adversarial_losses, kl_divergence, reconstruction_loss, reparameterize, reparameterize_with, CvaeLoss,
    PROB_CLAMP,
};
pub use network::{Encoded, Encoder, GeneratorLosses, GeneratorPass, LatentOutputs, NormativeModel, Noise};
