use std::fs;
use std::path::Path;

use acvae_core::evaluator::EvalConfig;
use acvae_core::models::{AdvTarget, ModelConfig, ModelSettings, Variant};
use acvae_core::trainer::TrainConfig;
use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Recursively overwrites `base` with the keys present in `patch`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Reads a JSON document whose missing keys fall back to `T::default()`.
/// Unknown keys are rejected by `T`'s own deserializer.
pub fn load_partial<T>(path: Option<&Path>) -> Result<T>
where
    T: Default + Serialize + DeserializeOwned,
{
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let patch: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let mut base = serde_json::to_value(T::default())?;
    merge(&mut base, patch);
    serde_json::from_value(base).with_context(|| format!("invalid config {}", path.display()))
}

/// Configuration of a single `train` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    pub seed: u64,
    pub variant: Variant,
    pub latent_dim: usize,
    pub hidden_sizes: [usize; 2],
    pub cvae_loss_weight: f64,
    /// `None` uses the experiment default for variants with a discriminator
    /// and 0 for the rest.
    pub adv_loss_weight: Option<f64>,
    pub leaky_slope: f64,
    pub adv_target: AdvTarget,
    pub hc_train_fraction: f64,
    pub session_window_days: u32,
    pub train: TrainConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        let m = ModelSettings::default();
        let e = EvalConfig::default();
        TrainRunConfig {
            seed: 2023,
            variant: Variant::ACVAE,
            latent_dim: m.latent_dim,
            hidden_sizes: m.hidden_sizes,
            cvae_loss_weight: m.cvae_loss_weight,
            adv_loss_weight: None,
            leaky_slope: m.leaky_slope,
            adv_target: m.adv_target,
            hc_train_fraction: e.hc_train_fraction,
            session_window_days: e.session_window_days,
            train: TrainConfig::default(),
        }
    }
}

impl TrainRunConfig {
    pub fn model_config(&self) -> Result<ModelConfig> {
        let settings = ModelSettings {
            latent_dim: self.latent_dim,
            hidden_sizes: self.hidden_sizes,
            cvae_loss_weight: self.cvae_loss_weight,
            adv_loss_weight: ModelSettings::default().adv_loss_weight,
            leaky_slope: self.leaky_slope,
            adv_target: self.adv_target,
        };
        let mut cfg = settings.config_for(self.variant);
        if let Some(w) = self.adv_loss_weight {
            cfg.adv_loss_weight = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config()?;
        self.train.validate()?;
        anyhow::ensure!(
            self.hc_train_fraction > 0.0 && self.hc_train_fraction <= 1.0,
            "hc_train_fraction must lie in (0, 1], got {}",
            self.hc_train_fraction
        );
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_keeps_unmentioned_keys() {
        let mut base = serde_json::json!({"a": 1, "b": {"c": 2, "d": 3}});
        merge(&mut base, serde_json::json!({"b": {"d": 4}, "e": 5}));
        assert_eq!(base, serde_json::json!({"a": 1, "b": {"c": 2, "d": 4}, "e": 5}));
    }

    #[test]
    fn adv_weight_defaults_by_variant() {
        let mut cfg = TrainRunConfig::default();
        assert_eq!(cfg.model_config().unwrap().adv_loss_weight, 4.0);
        cfg.variant = Variant::CVAE;
        assert_eq!(cfg.model_config().unwrap().adv_loss_weight, 0.0);
        cfg.adv_loss_weight = Some(2.0);
        assert!(cfg.validate().is_err());
    }
}
