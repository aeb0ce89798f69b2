use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::NormativeModel;
use crate::diffcore::{Matrix, Rng};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "acvae-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Serialized model: configuration plus every parameter tensor by name.
/// Floats are written in shortest round-trip form, so loading reproduces
/// the weights bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(model: &NormativeModel) -> Self {
        let tensors = model
            .params()
            .into_iter()
            .map(|p| NamedTensor {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
                data: p.value.data().to_vec(),
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            tensors,
        }
    }

    pub fn into_model(self) -> Result<NormativeModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::data(format!("not a model checkpoint (format `{}`)", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::data(format!("unsupported checkpoint version {}", self.version)));
        }
        // The RNG only fills placeholder weights that are overwritten below.
        let mut model = NormativeModel::new(self.config, &mut Rng::new(0))?;
        let mut params = model.params_mut();
        if params.len() != self.tensors.len() {
            return Err(Error::data(format!(
                "checkpoint has {} tensors, model expects {}",
                self.tensors.len(),
                params.len()
            )));
        }
        for (p, t) in params.iter_mut().zip(self.tensors) {
            if p.name != t.name {
                return Err(Error::data(format!("expected tensor `{}`, found `{}`", p.name, t.name)));
            }
            let value = Matrix::from_vec(t.rows, t.cols, t.data)?;
            value.expect_shape(p.value.shape(), &t.name)?;
            p.value = value;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

impl NormativeModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        Checkpoint::from_model(self).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::load(path)?.into_model()
    }
}
