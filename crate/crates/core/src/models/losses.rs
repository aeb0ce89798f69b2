use serde::{Deserialize, Serialize};

use super::network::{NormativeModel, Noise};
use crate::diffcore::{Matrix, Rng};
use crate::error::{Error, Result};

/// Probabilities inside log terms are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-7;

/// KL of `N(μ, σ²)` from `N(0, I)`, summed over latent dimensions and
/// averaged over the batch.
pub fn kl_divergence(mean: &Matrix, logvar: &Matrix) -> Result<f64> {
    logvar.expect_shape(mean.shape(), "kl_divergence")?;
    if mean.rows() == 0 {
        return Ok(0.0);
    }
    let total: f64 = mean
        .data()
        .iter()
        .zip(logvar.data())
        .map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum();
    Ok(total / mean.rows() as f64)
}

/// Mean squared error over batch and features.
pub fn reconstruction_loss(x: &Matrix, x_hat: &Matrix) -> Result<f64> {
    x_hat.expect_shape(x.shape(), "reconstruction_loss")?;
    let n = x.data().len();
    if n == 0 {
        return Ok(0.0);
    }
    Ok(x.data().iter().zip(x_hat.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64)
}

/// `(d_loss, g_loss)` from discriminator outputs on real (prior) and fake
/// (posterior) samples:
/// `d = −[mean log D(real) + mean log(1 − D(fake))]`, `g = −mean log D(fake)`.
pub fn adversarial_losses(p_real: &[f64], p_fake: &[f64]) -> (f64, f64) {
    let clamp = |p: f64| p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&p| f(clamp(p))).sum::<f64>() / v.len() as f64;
    let d = -(mean(p_real, &|p| p.ln()) + mean(p_fake, &|p| (1.0 - p).ln()));
    let g = -mean(p_fake, &|p| p.ln());
    (d, g)
}

/// `z = μ + exp(logσ²/2) ⊙ ε` for a given `ε`.
pub fn reparameterize_with(mean: &Matrix, logvar: &Matrix, eps: &Matrix) -> Result<Matrix> {
    logvar.expect_shape(mean.shape(), "reparameterize")?;
    eps.expect_shape(mean.shape(), "reparameterize")?;
    let mut z = mean.clone();
    for ((zi, &lv), &e) in z.data_mut().iter_mut().zip(logvar.data()).zip(eps.data()) {
        *zi += (0.5 * lv).exp() * e;
    }
    Ok(z)
}

pub fn reparameterize(mean: &Matrix, logvar: &Matrix, rng: &mut Rng) -> Result<Matrix> {
    let eps = crate::diffcore::sample_standard_normal(rng, mean.rows(), mean.cols());
    reparameterize_with(mean, logvar, &eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvaeLoss {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

impl NormativeModel {
    /// Unweighted `recon + kl` on one batch with freshly sampled noise.
    pub fn cvae_loss(&self, x: &Matrix, c: Option<&Matrix>, rng: &mut Rng) -> Result<CvaeLoss> {
        if !self.config.variant.is_variational() {
            return Err(Error::config(format!("{} has no variational posterior", self.config.variant)));
        }
        let noise = Noise::sample(self, x.rows(), rng);
        let pass = self.forward_generator(x, c, &noise)?;
        let recon = reconstruction_loss(x, pass.x_hat())?;
        let kl = pass.kl()?.unwrap_or(0.0);
        Ok(CvaeLoss { total: recon + kl, recon, kl })
    }

    /// `(d_loss, g_loss)` of the discriminator on prior vs posterior samples.
    pub fn discriminator_losses(&self, z_prior: &Matrix, z_posterior: &Matrix) -> Result<(f64, f64)> {
        let p_real = self.discriminate(z_prior)?;
        let p_fake = self.discriminate(z_posterior)?;
        Ok(adversarial_losses(p_real.data(), p_fake.data()))
    }
}
