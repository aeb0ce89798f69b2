use serde::{Deserialize, Serialize};

use super::{train, TrainConfig};
use crate::diffcore::{Matrix, Rng};
use crate::error::{Error, Result};
use crate::models::{reconstruction_loss, ModelConfig, ModelSettings, NormativeModel, Variant};
use crate::parallel::{try_map_indexed, Execution};

pub const SCREEN_LATENT: [usize; 2] = [10, 20];
pub const SCREEN_HIDDEN: [usize; 3] = [90, 100, 110];
const VALIDATION_FRACTION: f64 = 0.1;

/// Latent sizes × symmetric hidden sizes for one variant.
pub fn screening_grid(settings: &ModelSettings, variant: Variant) -> Vec<ModelConfig> {
    let mut grid = Vec::new();
    for latent in SCREEN_LATENT {
        for hidden in SCREEN_HIDDEN {
            let s = ModelSettings { latent_dim: latent, hidden_sizes: [hidden, hidden], ..settings.clone() };
            grid.push(s.config_for(variant));
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenResult {
    pub best: ModelConfig,
    /// Validation reconstruction loss of every grid entry, in grid order.
    pub scores: Vec<(ModelConfig, f64)>,
}

/// Trains every grid entry on 90% of the (HC) training rows and keeps the
/// one with the lowest reconstruction loss on the held-out 10%. Ties go to
/// the smaller latent size, then the smaller hidden sizes.
pub fn screen(
    grid: &[ModelConfig],
    x: &Matrix,
    c: Option<&Matrix>,
    config: &TrainConfig,
    seed: u64,
    exec: Execution,
) -> Result<ScreenResult> {
    if grid.is_empty() {
        return Err(Error::config("screening grid is empty"));
    }
    let n = x.rows();
    if n < 2 {
        return Err(Error::data("screening needs at least two training rows"));
    }
    let root = Rng::new(seed);
    let mut order: Vec<usize> = (0..n).collect();
    root.fork(0).shuffle(&mut order);
    let n_val = ((VALIDATION_FRACTION * n as f64).round() as usize).clamp(1, n - 1);
    let (val_idx, fit_idx) = order.split_at(n_val);
    let (fit_x, val_x) = (x.select_rows(fit_idx), x.select_rows(val_idx));
    let (fit_c, val_c) = (c.map(|c| c.select_rows(fit_idx)), c.map(|c| c.select_rows(val_idx)));

    let losses = try_map_indexed(grid.len(), exec, |i| -> Result<f64> {
        let cfg = &grid[i];
        let model = NormativeModel::new(cfg.clone(), &mut root.fork(1 + 2 * i as u64))?;
        let train_cfg = config.with_seed(root.fork(2 + 2 * i as u64).seed());
        let (model, _) = train(model, &fit_x, fit_c.as_ref(), &train_cfg)?;
        reconstruction_loss(&val_x, &model.reconstruct(&val_x, val_c.as_ref())?)
    })?;

    let best = pick_best(grid, &losses);
    Ok(ScreenResult { best: grid[best].clone(), scores: grid.iter().cloned().zip(losses).collect() })
}

fn pick_best(grid: &[ModelConfig], losses: &[f64]) -> usize {
    let key = |i: usize| (grid[i].latent_dim, grid[i].hidden_sizes);
    (0..grid.len())
        .min_by(|&a, &b| losses[a].total_cmp(&losses[b]).then_with(|| key(a).cmp(&key(b))))
        .expect("grid is non-empty")
}
