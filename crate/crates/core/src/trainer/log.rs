use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const TRAINLOG_HEADER: &str = "epoch,recon,kl,d_loss,g_loss,lr";

/// Epoch-mean losses. Terms a variant does not have are `None` and written
/// as empty CSV fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub recon: f64,
    pub kl: Option<f64>,
    pub d_loss: Option<f64>,
    pub g_loss: Option<f64>,
    /// Learning rate of the epoch's first iteration.
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub generator_steps: u64,
    pub discriminator_steps: u64,
    /// Learning rate applied at every iteration.
    pub lr_trace: Vec<f64>,
}

impl TrainLog {
    pub fn all_finite(&self) -> bool {
        self.epochs.iter().all(|e| {
            [Some(e.recon), e.kl, e.d_loss, e.g_loss, Some(e.lr)].into_iter().flatten().all(f64::is_finite)
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRAINLOG_HEADER}")?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for e in &self.epochs {
            writeln!(out, "{},{},{},{},{},{}", e.epoch, e.recon, opt(e.kl), opt(e.d_loss), opt(e.g_loss), e.lr)?;
        }
        Ok(())
    }
}
