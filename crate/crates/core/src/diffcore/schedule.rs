use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cyclical learning rate, exp-range policy: a triangular wave between
/// `min_lr` and `max_lr` whose amplitude decays by `gamma` every iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclicLrSchedule {
    pub min_lr: f64,
    pub max_lr: f64,
    pub gamma: f64,
    /// Iterations in half a cycle.
    pub step_size: usize,
}

impl CyclicLrSchedule {
    pub fn new(min_lr: f64, max_lr: f64, gamma: f64, step_size: usize) -> Result<Self> {
        let s = CyclicLrSchedule { min_lr, max_lr, gamma, step_size };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_lr > 0.0 && self.min_lr <= self.max_lr && self.max_lr.is_finite()) {
            return Err(Error::config(format!(
                "cyclic lr bounds must satisfy 0 < min_lr <= max_lr (got {} / {})",
                self.min_lr, self.max_lr
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if self.step_size == 0 {
            return Err(Error::config("step_size must be at least 1"));
        }
        Ok(())
    }

    pub fn lr(&self, iteration: usize) -> f64 {
        let step = self.step_size as f64;
        let it = iteration as f64;
        let cycle = (iteration / (2 * self.step_size)) as f64;
        let x = (it / step - 2.0 * cycle - 1.0).abs();
        let amplitude = (self.max_lr - self.min_lr) * (1.0 - x).max(0.0);
        // powi would overflow its i32 exponent on very long runs
        let lr = self.min_lr + amplitude * self.gamma.powf(it);
        lr.clamp(self.min_lr, self.max_lr)
    }
}
