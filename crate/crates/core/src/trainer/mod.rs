//! Mini-batch training with alternating discriminator / generator updates,
//! plus the latent/hidden-size screening grid.

mod log;
mod screen;

pub use log::{EpochLog, TrainLog, TRAINLOG_HEADER};
pub use screen::{screen, screening_grid, ScreenResult, SCREEN_HIDDEN, SCREEN_LATENT};

use serde::{Deserialize, Serialize};

use crate::diffcore::{AdamConfig, AdamState, CyclicLrSchedule, Matrix, Rng};
use crate::error::{Error, Result};
use crate::models::{NormativeModel, Noise};

/// Cyclic learning-rate bounds. `step_size: None` means two epochs' worth
/// of iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSettings {
    pub min_lr: f64,
    pub max_lr: f64,
    pub gamma: f64,
    pub step_size: Option<usize>,
}

impl Default for ScheduleSettings {
    fn default() -> Self {
        ScheduleSettings { min_lr: 1e-4, max_lr: 5e-3, gamma: 0.98, step_size: None }
    }
}

impl ScheduleSettings {
    pub fn resolve(&self, batches_per_epoch: usize) -> Result<CyclicLrSchedule> {
        let step = self.step_size.unwrap_or(2 * batches_per_epoch.max(1));
        CyclicLrSchedule::new(self.min_lr, self.max_lr, self.gamma, step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: ScheduleSettings,
    pub adam: AdamConfig,
    /// Seeds batch shuffling and the reparameterization / prior noise.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 256,
            schedule: ScheduleSettings::default(),
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        self.schedule.resolve(1)?;
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig { seed, ..self.clone() }
    }
}

const NOISE_STREAM: u64 = u64::MAX;

/// Trains `model` in place. The log is filled epoch by epoch, so after an
/// error it holds every completed epoch.
///
/// Per batch: one discriminator step on `d_loss` (adversarial variants),
/// then one encoder+decoder step on the weighted generator objective
/// evaluated against the updated discriminator. Both steps use the
/// learning rate of the same iteration index.
pub fn train_with_log(
    model: &mut NormativeModel,
    x: &Matrix,
    c: Option<&Matrix>,
    config: &TrainConfig,
    log: &mut TrainLog,
) -> Result<()> {
    config.validate()?;
    let n = x.rows();
    if n == 0 {
        return Err(Error::data("empty training set"));
    }
    if let Some(c) = c {
        c.expect_shape((n, model.config.cond_dim), "training covariates")?;
    }
    let batches = n.div_ceil(config.batch_size);
    let schedule = config.schedule.resolve(batches)?;
    let adversarial = model.config.is_adversarial();
    let mut gen_opt = AdamState::new(config.adam);
    let mut disc_opt = AdamState::new(config.adam);
    let root = Rng::new(config.seed);
    let mut noise_rng = root.fork(NOISE_STREAM);
    let mut iteration = 0usize;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        root.fork(epoch as u64).shuffle(&mut order);
        let mut sums = EpochSums::default();
        let epoch_lr = schedule.lr(iteration);
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let bx = x.select_rows(idx);
            let bc = c.map(|c| c.select_rows(idx));
            let lr = schedule.lr(iteration);
            let noise = Noise::sample(model, idx.len(), &mut noise_rng);
            let at = |e: Error| match e {
                Error::NonFiniteGradient { .. } => Error::NonFiniteLoss { epoch, batch: b },
                other => other,
            };
            let pass = model.forward_generator(&bx, bc.as_ref(), &noise)?;

            let d_loss = if adversarial {
                let (real, fake) = model.adversarial_samples(&pass, &bx, &noise)?;
                let d = model.discriminator_backward(&real, &fake).map_err(at)?;
                disc_opt.step(&mut model.discriminator_params_mut(), lr)?;
                Some(d)
            } else {
                None
            };
            let losses = model.generator_backward(&pass, &bx).map_err(at)?;
            let values = [Some(losses.total), losses.kl, losses.g_loss, d_loss];
            if values.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            gen_opt.step(&mut model.generator_params_mut(), lr)?;

            sums.add(idx.len(), losses.recon, losses.kl, d_loss, losses.g_loss);
            log.lr_trace.push(lr);
            iteration += 1;
        }
        log.epochs.push(sums.finish(epoch + 1, epoch_lr, n));
        log.generator_steps = gen_opt.steps();
        log.discriminator_steps = disc_opt.steps();
    }
    Ok(())
}

pub fn train(
    model: NormativeModel,
    x: &Matrix,
    c: Option<&Matrix>,
    config: &TrainConfig,
) -> Result<(NormativeModel, TrainLog)> {
    let mut model = model;
    let mut log = TrainLog::default();
    train_with_log(&mut model, x, c, config, &mut log)?;
    Ok((model, log))
}

#[derive(Default)]
struct EpochSums {
    recon: f64,
    kl: Option<f64>,
    d_loss: Option<f64>,
    g_loss: Option<f64>,
}

impl EpochSums {
    fn add(&mut self, rows: usize, recon: f64, kl: Option<f64>, d: Option<f64>, g: Option<f64>) {
        let w = rows as f64;
        self.recon += w * recon;
        for (acc, v) in [(&mut self.kl, kl), (&mut self.d_loss, d), (&mut self.g_loss, g)] {
            if let Some(v) = v {
                *acc = Some(acc.unwrap_or(0.0) + w * v);
            }
        }
    }

    /// Batch losses averaged with weights proportional to batch size.
    fn finish(self, epoch: usize, lr: f64, n: usize) -> EpochLog {
        let n = n as f64;
        EpochLog {
            epoch,
            recon: self.recon / n,
            kl: self.kl.map(|v| v / n),
            d_loss: self.d_loss.map(|v| v / n),
            g_loss: self.g_loss.map(|v| v / n),
            lr,
        }
    }
}
