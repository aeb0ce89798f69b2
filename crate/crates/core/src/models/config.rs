use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datapipe::{COVARIATE_DIM, N_ROI};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    AE,
    VAE,
    CVAE,
    AAE,
    ACVAE,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::AE, Variant::VAE, Variant::CVAE, Variant::AAE, Variant::ACVAE];

    pub fn is_variational(self) -> bool {
        matches!(self, Variant::VAE | Variant::CVAE | Variant::ACVAE)
    }

    pub fn has_discriminator(self) -> bool {
        matches!(self, Variant::AAE | Variant::ACVAE)
    }

    /// Whether the variant receives covariates by default.
    pub fn is_conditional(self) -> bool {
        matches!(self, Variant::CVAE | Variant::AAE | Variant::ACVAE)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::AE => "AE",
            Variant::VAE => "VAE",
            Variant::CVAE => "CVAE",
            Variant::AAE => "AAE",
            Variant::ACVAE => "ACVAE",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::config(format!("unknown model variant `{s}`")))
    }
}

/// What the discriminator sees: latent codes (prior draws vs posterior
/// draws) or data space (inputs vs reconstructions).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvTarget {
    #[default]
    Latent,
    Reconstruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub input_dim: usize,
    /// 0 for unconditioned models.
    pub cond_dim: usize,
    pub latent_dim: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden_sizes: [usize; 2],
    pub cvae_loss_weight: f64,
    pub adv_loss_weight: f64,
    pub leaky_slope: f64,
    #[serde(default)]
    pub adv_target: AdvTarget,
}

impl ModelConfig {
    pub fn new(variant: Variant, latent_dim: usize, hidden_sizes: [usize; 2]) -> Self {
        ModelSettings { latent_dim, hidden_sizes, ..ModelSettings::default() }.config_for(variant)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.variant;
        if self.input_dim == 0 || self.latent_dim == 0 || self.hidden_sizes.contains(&0) {
            return Err(Error::config("input, latent and hidden sizes must be positive"));
        }
        if self.latent_dim >= self.input_dim {
            return Err(Error::config(format!(
                "latent_dim ({}) must be smaller than input_dim ({})",
                self.latent_dim, self.input_dim
            )));
        }
        if !v.is_conditional() && self.cond_dim != 0 {
            return Err(Error::config(format!("{v} is unconditioned but cond_dim = {}", self.cond_dim)));
        }
        if !(self.cvae_loss_weight > 0.0 && self.cvae_loss_weight.is_finite()) {
            return Err(Error::config("cvae_loss_weight must be positive"));
        }
        if !(self.adv_loss_weight >= 0.0 && self.adv_loss_weight.is_finite()) {
            return Err(Error::config("adv_loss_weight must be non-negative"));
        }
        if !v.has_discriminator() && self.adv_loss_weight > 0.0 {
            return Err(Error::config(format!(
                "{v} has no discriminator but adv_loss_weight = {}",
                self.adv_loss_weight
            )));
        }
        if !(self.leaky_slope > 0.0) {
            return Err(Error::config("leaky_slope must be positive"));
        }
        Ok(())
    }

    pub fn is_adversarial(&self) -> bool {
        self.variant.has_discriminator() && self.adv_loss_weight > 0.0
    }
}

/// Hyper-parameters shared by every variant of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub latent_dim: usize,
    pub hidden_sizes: [usize; 2],
    pub cvae_loss_weight: f64,
    /// Applied to variants with a discriminator; others use 0.
    pub adv_loss_weight: f64,
    pub leaky_slope: f64,
    pub adv_target: AdvTarget,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            latent_dim: 10,
            hidden_sizes: [100, 100],
            cvae_loss_weight: 1.0,
            adv_loss_weight: 4.0,
            leaky_slope: 0.01,
            adv_target: AdvTarget::Latent,
        }
    }
}

impl ModelSettings {
    pub fn config_for(&self, variant: Variant) -> ModelConfig {
        ModelConfig {
            variant,
            input_dim: N_ROI,
            cond_dim: if variant.is_conditional() { COVARIATE_DIM } else { 0 },
            latent_dim: self.latent_dim,
            hidden_sizes: self.hidden_sizes,
            cvae_loss_weight: self.cvae_loss_weight,
            adv_loss_weight: if variant.has_discriminator() { self.adv_loss_weight } else { 0.0 },
            leaky_slope: self.leaky_slope,
            adv_target: self.adv_target,
        }
    }
}
