use super::config::{AdvTarget, ModelConfig};
use super::losses::{kl_divergence, reconstruction_loss, PROB_CLAMP};
use crate::diffcore::{
    ensure_finite_grads, sample_standard_normal, Activation, DenseCache, DenseLayer, Matrix, Mlp, MlpCache, Param, Rng,
};
use crate::error::{Error, Result};

const LOGVAR_BOUND: f64 = 10.0;

/// Shared trunk with a location head and, for variational variants, a
/// log-variance head.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub trunk: Mlp,
    pub mean_head: DenseLayer,
    pub logvar_head: Option<DenseLayer>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Encoded {
    Gaussian { mean: Matrix, logvar: Matrix },
    Point(Matrix),
}

impl Encoded {
    /// Posterior mean, or the code itself for deterministic encoders.
    pub fn location(&self) -> &Matrix {
        match self {
            Encoded::Gaussian { mean, .. } => mean,
            Encoded::Point(z) => z,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormativeModel {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub decoder: Mlp,
    pub discriminator: Option<Mlp>,
}

/// Random inputs of one training step, drawn before the forward pass so the
/// objective is a deterministic function of the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    /// Reparameterization noise (variational variants).
    pub eps: Option<Matrix>,
    /// Prior draws for the latent discriminator.
    pub prior: Option<Matrix>,
}

impl Noise {
    pub fn none() -> Self {
        Noise { eps: None, prior: None }
    }

    /// Draws `ε` first, then prior samples, only where the model uses them.
    pub fn sample(model: &NormativeModel, batch: usize, rng: &mut Rng) -> Self {
        let cfg = &model.config;
        let eps = cfg.variant.is_variational().then(|| sample_standard_normal(rng, batch, cfg.latent_dim));
        let prior = (cfg.is_adversarial() && cfg.adv_target == AdvTarget::Latent)
            .then(|| sample_standard_normal(rng, batch, cfg.latent_dim));
        Noise { eps, prior }
    }
}

/// Latent quantities of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentOutputs {
    pub z: Matrix,
    pub mean: Matrix,
    /// Clamped log-variance; `None` for deterministic encoders.
    pub logvar: Option<Matrix>,
}

/// Cached generator (encoder + decoder) forward pass.
#[derive(Debug, Clone)]
pub struct GeneratorPass {
    latent: LatentOutputs,
    eps: Option<Matrix>,
    logvar_inside: Vec<bool>,
    trunk_cache: MlpCache,
    mean_cache: DenseCache,
    logvar_cache: Option<DenseCache>,
    decoder_cache: MlpCache,
    x_hat: Matrix,
}

impl GeneratorPass {
    pub fn latent(&self) -> &LatentOutputs {
        &self.latent
    }

    pub fn x_hat(&self) -> &Matrix {
        &self.x_hat
    }

    pub fn kl(&self) -> Result<Option<f64>> {
        match &self.latent.logvar {
            Some(lv) => Ok(Some(kl_divergence(&self.latent.mean, lv)?)),
            None => Ok(None),
        }
    }
}

/// Generator-side objective terms. `total` is
/// `cvae_weight · (recon + kl) + adv_weight · g_loss` with absent terms
/// dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorLosses {
    pub recon: f64,
    pub kl: Option<f64>,
    pub g_loss: Option<f64>,
    pub total: f64,
}

fn clamp_prob(p: f64) -> (f64, bool) {
    let c = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    (c, p > PROB_CLAMP && p < 1.0 - PROB_CLAMP)
}

fn generator_params<'a>(enc: &'a mut Encoder, decoder: &'a mut Mlp) -> Vec<&'a mut Param> {
    let mut out = enc.trunk.params_mut();
    out.extend([&mut enc.mean_head.weight, &mut enc.mean_head.bias]);
    if let Some(h) = &mut enc.logvar_head {
        out.extend([&mut h.weight, &mut h.bias]);
    }
    out.extend(decoder.params_mut());
    out
}

impl NormativeModel {
    /// Glorot-initialized model. Initialization order is encoder trunk,
    /// heads, decoder, discriminator, so variants differing only in the
    /// discriminator share encoder/decoder weights for a given seed.
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let leaky = Activation::LeakyRelu { slope: config.leaky_slope };
        let [h0, h1] = config.hidden_sizes;
        let trunk = Mlp::glorot("encoder.trunk", &[config.input_dim + config.cond_dim, h0, h1], leaky, leaky, rng);
        let mean_head = DenseLayer::glorot("encoder.mean", h1, config.latent_dim, Activation::Identity, rng);
        let logvar_head = config
            .variant
            .is_variational()
            .then(|| DenseLayer::glorot("encoder.logvar", h1, config.latent_dim, Activation::Identity, rng));
        let decoder = Mlp::glorot(
            "decoder",
            &[config.latent_dim + config.cond_dim, h1, h0, config.input_dim],
            leaky,
            Activation::Identity,
            rng,
        );
        let discriminator = config.variant.has_discriminator().then(|| {
            let input = match config.adv_target {
                AdvTarget::Latent => config.latent_dim,
                AdvTarget::Reconstruction => config.input_dim,
            };
            Mlp::glorot("discriminator", &[input, h0, h1, 1], leaky, Activation::Sigmoid, rng)
        });
        Ok(NormativeModel { config, encoder: Encoder { trunk, mean_head, logvar_head }, decoder, discriminator })
    }

    fn with_condition(&self, m: &Matrix, c: Option<&Matrix>) -> Result<Matrix> {
        match (self.config.cond_dim, c) {
            (0, None) => Ok(m.clone()),
            (0, Some(_)) => Err(Error::config(format!(
                "{} is unconditioned; covariates must not be passed",
                self.config.variant
            ))),
            (_, None) => Err(Error::config(format!("{} requires covariates", self.config.variant))),
            (d, Some(c)) => {
                c.expect_shape((m.rows(), d), "covariates")?;
                m.hcat(c)
            }
        }
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.config.input_dim {
            return Err(Error::dim(format!("input has {} columns, model expects {}", x.cols(), self.config.input_dim)));
        }
        Ok(())
    }

    pub fn encode(&self, x: &Matrix, c: Option<&Matrix>) -> Result<Encoded> {
        self.check_input(x)?;
        let h = self.encoder.trunk.forward(&self.with_condition(x, c)?)?;
        let mean = self.encoder.mean_head.forward(&h)?;
        Ok(match &self.encoder.logvar_head {
            Some(head) => Encoded::Gaussian {
                mean,
                logvar: head.forward(&h)?.map(|v| v.clamp(-LOGVAR_BOUND, LOGVAR_BOUND)),
            },
            None => Encoded::Point(mean),
        })
    }

    pub fn decode(&self, z: &Matrix, c: Option<&Matrix>) -> Result<Matrix> {
        if z.cols() != self.config.latent_dim {
            return Err(Error::dim(format!("latent has {} columns, model expects {}", z.cols(), self.config.latent_dim)));
        }
        self.decoder.forward(&self.with_condition(z, c)?)
    }

    /// Reconstruction through the posterior mean (no sampling).
    pub fn reconstruct(&self, x: &Matrix, c: Option<&Matrix>) -> Result<Matrix> {
        let enc = self.encode(x, c)?;
        self.decode(enc.location(), c)
    }

    /// Discriminator probabilities, one per row.
    pub fn discriminate(&self, input: &Matrix) -> Result<Matrix> {
        self.discriminator
            .as_ref()
            .ok_or_else(|| Error::config(format!("{} has no discriminator", self.config.variant)))?
            .forward(input)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = self.encoder.trunk.params();
        out.extend([&self.encoder.mean_head.weight, &self.encoder.mean_head.bias]);
        if let Some(h) = &self.encoder.logvar_head {
            out.extend([&h.weight, &h.bias]);
        }
        out.extend(self.decoder.params());
        if let Some(d) = &self.discriminator {
            out.extend(d.params());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = generator_params(&mut self.encoder, &mut self.decoder);
        if let Some(d) = &mut self.discriminator {
            out.extend(d.params_mut());
        }
        out
    }

    /// Encoder and decoder parameters.
    pub fn generator_params_mut(&mut self) -> Vec<&mut Param> {
        generator_params(&mut self.encoder, &mut self.decoder)
    }

    pub fn discriminator_params_mut(&mut self) -> Vec<&mut Param> {
        self.discriminator.as_mut().map(Mlp::params_mut).unwrap_or_default()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    fn latent_input(&self, pass_latent: &LatentOutputs, x: &Matrix, x_hat: &Matrix) -> (Matrix, Matrix) {
        match self.config.adv_target {
            AdvTarget::Latent => (Matrix::zeros(0, 0), pass_latent.z.clone()),
            AdvTarget::Reconstruction => (x.clone(), x_hat.clone()),
        }
    }

    /// Encoder → reparameterization → decoder with caches for backprop.
    pub fn forward_generator(&self, x: &Matrix, c: Option<&Matrix>, noise: &Noise) -> Result<GeneratorPass> {
        self.check_input(x)?;
        let (h, trunk_cache) = self.encoder.trunk.forward_cached(&self.with_condition(x, c)?)?;
        let (mean, mean_cache) = self.encoder.mean_head.forward_cached(&h)?;
        let (latent, eps, logvar_inside, logvar_cache) = match &self.encoder.logvar_head {
            Some(head) => {
                let (raw, cache) = head.forward_cached(&h)?;
                let inside = raw.data().iter().map(|v| v.abs() < LOGVAR_BOUND).collect();
                let logvar = raw.map(|v| v.clamp(-LOGVAR_BOUND, LOGVAR_BOUND));
                let eps = noise
                    .eps
                    .clone()
                    .ok_or_else(|| Error::config("variational forward pass needs reparameterization noise"))?;
                let z = super::losses::reparameterize_with(&mean, &logvar, &eps)?;
                (LatentOutputs { z, mean, logvar: Some(logvar) }, Some(eps), inside, Some(cache))
            }
            None => (LatentOutputs { z: mean.clone(), mean, logvar: None }, None, Vec::new(), None),
        };
        let (x_hat, decoder_cache) = self.decoder.forward_cached(&self.with_condition(&latent.z, c)?)?;
        Ok(GeneratorPass { latent, eps, logvar_inside, trunk_cache, mean_cache, logvar_cache, decoder_cache, x_hat })
    }

    /// Generator objective given fixed latent outputs (the encoder is not
    /// re-run). Used to evaluate decoder-only perturbations.
    pub fn objective_from_latent(&self, latent: &LatentOutputs, x: &Matrix, c: Option<&Matrix>) -> Result<GeneratorLosses> {
        let x_hat = self.decode(&latent.z, c)?;
        self.combine_losses(latent, x, &x_hat)
    }

    /// Generator objective for fixed noise, without gradients.
    pub fn generator_objective(&self, x: &Matrix, c: Option<&Matrix>, noise: &Noise) -> Result<GeneratorLosses> {
        let pass = self.forward_generator(x, c, noise)?;
        self.combine_losses(&pass.latent, x, &pass.x_hat)
    }

    fn combine_losses(&self, latent: &LatentOutputs, x: &Matrix, x_hat: &Matrix) -> Result<GeneratorLosses> {
        let cfg = &self.config;
        let recon = reconstruction_loss(x, x_hat)?;
        let kl = match &latent.logvar {
            Some(lv) => Some(kl_divergence(&latent.mean, lv)?),
            None => None,
        };
        let g_loss = if cfg.is_adversarial() {
            let (_, fake) = self.latent_input(latent, x, x_hat);
            let p = self.discriminate(&fake)?;
            let n = p.rows() as f64;
            Some(-p.data().iter().map(|&v| clamp_prob(v).0.ln()).sum::<f64>() / n)
        } else {
            None
        };
        let total = cfg.cvae_loss_weight * (recon + kl.unwrap_or(0.0)) + cfg.adv_loss_weight * g_loss.unwrap_or(0.0);
        Ok(GeneratorLosses { recon, kl, g_loss, total })
    }

    /// Samples the discriminator compares: `(real, fake)`.
    pub fn adversarial_samples(&self, pass: &GeneratorPass, x: &Matrix, noise: &Noise) -> Result<(Matrix, Matrix)> {
        match self.config.adv_target {
            AdvTarget::Latent => {
                let prior = noise.prior.clone().ok_or_else(|| Error::config("latent discriminator needs prior draws"))?;
                Ok((prior, pass.latent.z.clone()))
            }
            AdvTarget::Reconstruction => Ok((x.clone(), pass.x_hat.clone())),
        }
    }

    /// Discriminator loss `−[mean log D(real) + mean log(1 − D(fake))]`.
    pub fn discriminator_objective(&self, real: &Matrix, fake: &Matrix) -> Result<f64> {
        let p_real = self.discriminate(real)?;
        let p_fake = self.discriminate(fake)?;
        Ok(super::losses::adversarial_losses(p_real.data(), p_fake.data()).0)
    }

    /// Resets discriminator gradients, then fills them with
    /// `∂ d_loss / ∂ θ_D`. `fake` is treated as a constant.
    pub fn discriminator_backward(&mut self, real: &Matrix, fake: &Matrix) -> Result<f64> {
        let disc = self
            .discriminator
            .as_mut()
            .ok_or_else(|| Error::config("variant has no discriminator"))?;
        disc.zero_grad();
        let (p_real, cache_real) = disc.forward_cached(real)?;
        let (p_fake, cache_fake) = disc.forward_cached(fake)?;
        let (nr, nf) = (p_real.rows() as f64, p_fake.rows() as f64);
        let loss = super::losses::adversarial_losses(p_real.data(), p_fake.data()).0;
        let g_real = p_real.map(|p| {
            if clamp_prob(p).1 {
                -1.0 / (nr * p)
            } else {
                0.0
            }
        });
        let g_fake = p_fake.map(|p| {
            if clamp_prob(p).1 {
                1.0 / (nf * (1.0 - p))
            } else {
                0.0
            }
        });
        disc.backward(&cache_real, &g_real)?;
        disc.backward(&cache_fake, &g_fake)?;
        ensure_finite_grads(disc.params())?;
        Ok(loss)
    }

    /// Resets encoder/decoder gradients and fills them with the gradient of
    /// the generator objective for `pass`, using the current discriminator.
    pub fn generator_backward(&mut self, pass: &GeneratorPass, x: &Matrix) -> Result<GeneratorLosses> {
        let cfg = self.config.clone();
        for p in self.generator_params_mut() {
            p.zero_grad();
        }
        let (b, f) = (x.rows() as f64, x.cols() as f64);
        let (wc, wa) = (cfg.cvae_loss_weight, cfg.adv_loss_weight);
        let losses = self.combine_losses(&pass.latent, x, &pass.x_hat)?;

        let mut d_xhat = pass.x_hat.zip_map(x, |xh, xv| wc * 2.0 * (xh - xv) / (b * f))?;
        let mut d_z_adv: Option<Matrix> = None;
        if cfg.is_adversarial() {
            let (_, fake) = self.latent_input(&pass.latent, x, &pass.x_hat);
            let disc = self.discriminator.as_mut().expect("adversarial variant has a discriminator");
            let (p, cache) = disc.forward_cached(&fake)?;
            let n = p.rows() as f64;
            let dp = p.map(|v| if clamp_prob(v).1 { -wa / (n * v) } else { 0.0 });
            let d_fake = disc.backward(&cache, &dp)?;
            disc.zero_grad();
            match cfg.adv_target {
                AdvTarget::Latent => d_z_adv = Some(d_fake),
                AdvTarget::Reconstruction => d_xhat.add_scaled(&d_fake, 1.0)?,
            }
        }

        let d_dec_in = self.decoder.backward(&pass.decoder_cache, &d_xhat)?;
        let (mut d_z, _) = d_dec_in.split_cols(cfg.latent_dim)?;
        if let Some(extra) = d_z_adv {
            d_z.add_scaled(&extra, 1.0)?;
        }

        let d_h = match (&pass.latent.logvar, &pass.eps) {
            (Some(logvar), Some(eps)) => {
                let mean = &pass.latent.mean;
                let d_mean = d_z.zip_map(mean, |dz, m| dz + wc * m / b)?;
                let mut d_logvar = d_z.clone();
                for (k, g) in d_logvar.data_mut().iter_mut().enumerate() {
                    let lv = logvar.data()[k];
                    let from_z = *g * eps.data()[k] * 0.5 * (0.5 * lv).exp();
                    let from_kl = wc * 0.5 * (lv.exp() - 1.0) / b;
                    *g = if pass.logvar_inside[k] { from_z + from_kl } else { 0.0 };
                }
                let mut d_h = self.encoder.mean_head.backward(&pass.mean_cache, &d_mean)?;
                let head = self.encoder.logvar_head.as_mut().expect("variational encoder has a logvar head");
                let cache = pass.logvar_cache.as_ref().expect("variational pass caches the logvar head");
                d_h.add_scaled(&head.backward(cache, &d_logvar)?, 1.0)?;
                d_h
            }
            _ => self.encoder.mean_head.backward(&pass.mean_cache, &d_z)?,
        };
        self.encoder.trunk.backward(&pass.trunk_cache, &d_h)?;

        let mut params = self.encoder.trunk.params();
        params.extend([&self.encoder.mean_head.weight, &self.encoder.mean_head.bias]);
        if let Some(h) = &self.encoder.logvar_head {
            params.extend([&h.weight, &h.bias]);
        }
        params.extend(self.decoder.params());
        ensure_finite_grads(params)?;
        Ok(losses)
    }

    /// Signs of every LeakyReLU pre-activation touched by the generator
    /// objective and the discriminator loss. Finite-difference checks use it
    /// to detect steps that cross a kink.
    pub fn activation_pattern(&self, x: &Matrix, c: Option<&Matrix>, noise: &Noise) -> Result<Vec<bool>> {
        let pass = self.forward_generator(x, c, noise)?;
        let mut signs = Vec::new();
        pass.trunk_cache.leaky_signs(&self.encoder.trunk.layers, &mut signs);
        pass.decoder_cache.leaky_signs(&self.decoder.layers, &mut signs);
        if let Some(disc) = &self.discriminator {
            if self.config.is_adversarial() {
                let (real, fake) = self.adversarial_samples(&pass, x, noise)?;
                for input in [real, fake] {
                    let (_, cache) = disc.forward_cached(&input)?;
                    cache.leaky_signs(&disc.layers, &mut signs);
                }
            }
        }
        Ok(signs)
    }
}
