//! Central finite-difference oracle for model gradients.
//!
//! The oracle re-implements the forward pass from the public layer API and
//! evaluates many perturbed parameter values at once by stacking them as
//! extra rows, so it shares no loss code with the model's backward pass.

use acvae_core::diffcore::{Activation, DenseCache, DenseLayer, Matrix, Param, Rng};
use acvae_core::models::ModelConfig;

use super::{random_covariates, random_matrix};
use acvae_core::models::{AdvTarget, NormativeModel, Noise, PROB_CLAMP};

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Entries whose gradient is this small in both estimates are compared
/// absolutely; central differences of an `O(1)` loss carry about `1e-10`
/// of rounding error.
pub const ABS_FLOOR: f64 = 1e-8;
const CHUNK: usize = 128;

#[derive(Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    /// Mismatches explained by a LeakyReLU unit switching sides within ±h.
    pub kinks: usize,
    pub failures: Vec<String>,
    pub max_rel_err: f64,
}

impl GradReport {
    /// No unexplained mismatch, and kink crossings stay below 0.1% (at
    /// least two are allowed, for small models).
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.kinks <= (self.checked / 1000).max(2)
    }

    pub fn merge(&mut self, other: GradReport) {
        self.checked += other.checked;
        self.kinks += other.kinks;
        self.failures.extend(other.failures);
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
    }
}

pub fn agrees(fd: f64, an: f64) -> bool {
    (fd - an).abs() <= REL_TOL * fd.abs().max(an.abs()) + ABS_FLOOR
}

fn rel_err(fd: f64, an: f64) -> f64 {
    let scale = fd.abs().max(an.abs());
    if scale <= ABS_FLOOR {
        0.0
    } else {
        (fd - an).abs() / scale
    }
}

#[derive(Clone, Copy, Debug)]
enum Loc {
    Trunk(usize),
    MeanHead,
    LogvarHead,
    Decoder(usize),
    Disc(usize),
}

fn layer_of(m: &NormativeModel, loc: Loc) -> &DenseLayer {
    match loc {
        Loc::Trunk(l) => &m.encoder.trunk.layers[l],
        Loc::MeanHead => &m.encoder.mean_head,
        Loc::LogvarHead => m.encoder.logvar_head.as_ref().unwrap(),
        Loc::Decoder(l) => &m.decoder.layers[l],
        Loc::Disc(l) => &m.discriminator.as_ref().unwrap().layers[l],
    }
}

fn param_at(m: &mut NormativeModel, loc: Loc, bias: bool) -> &mut Param {
    let layer = match loc {
        Loc::Trunk(l) => &mut m.encoder.trunk.layers[l],
        Loc::MeanHead => &mut m.encoder.mean_head,
        Loc::LogvarHead => m.encoder.logvar_head.as_mut().unwrap(),
        Loc::Decoder(l) => &mut m.decoder.layers[l],
        Loc::Disc(l) => &mut m.discriminator.as_mut().unwrap().layers[l],
    };
    if bias {
        &mut layer.bias
    } else {
        &mut layer.weight
    }
}

fn cached(layer: &DenseLayer, input: &Matrix) -> DenseCache {
    layer.forward_cached(input).unwrap().1
}

fn tile(m: &Matrix, k: usize) -> Matrix {
    let mut data = Vec::with_capacity(m.data().len() * k);
    for _ in 0..k {
        data.extend_from_slice(m.data());
    }
    Matrix::from_vec(m.rows() * k, m.cols(), data).unwrap()
}

fn maybe_hcat(a: &Matrix, c: Option<&Matrix>) -> Matrix {
    match c {
        Some(c) => a.hcat(c).unwrap(),
        None => a.clone(),
    }
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// One perturbed entry: `(input row index or None for a bias, output column, delta)`.
type Perturbation = (Option<usize>, usize, f64);

/// Layer output for each perturbation stacked in blocks of `cache.pre.rows()`.
fn stacked_output(cache: &DenseCache, act: Activation, perturbations: &[Perturbation]) -> Matrix {
    let (rows, cols) = cache.pre.shape();
    let mut out = tile(&cache.pre, perturbations.len());
    for (g, &(i, j, delta)) in perturbations.iter().enumerate() {
        for r in 0..rows {
            let scale = i.map_or(1.0, |i| cache.input.get(r, i));
            let v = out.get(g * rows + r, j) + delta * scale;
            out.set(g * rows + r, j, v);
        }
    }
    let _ = cols;
    out.map(|v| act.apply(v))
}

struct Oracle<'a> {
    m: &'a NormativeModel,
    x: &'a Matrix,
    c: Option<&'a Matrix>,
    eps: Option<&'a Matrix>,
    batch: usize,
    trunk: Vec<DenseCache>,
    mean_head: DenseCache,
    logvar_head: Option<DenseCache>,
    decoder: Vec<DenseCache>,
    mean: Matrix,
    logvar_raw: Option<Matrix>,
    z: Matrix,
    /// `[real; fake]` rows and the discriminator caches on them.
    disc_input: Option<Matrix>,
    disc: Vec<DenseCache>,
}

impl<'a> Oracle<'a> {
    fn new(m: &'a NormativeModel, x: &'a Matrix, c: Option<&'a Matrix>, noise: &'a Noise) -> Self {
        let mut trunk = Vec::new();
        let mut h = maybe_hcat(x, c);
        for layer in &m.encoder.trunk.layers {
            let cache = cached(layer, &h);
            h = cache.output.clone();
            trunk.push(cache);
        }
        let mean_head = cached(&m.encoder.mean_head, &h);
        let logvar_head = m.encoder.logvar_head.as_ref().map(|l| cached(l, &h));
        let mean = mean_head.output.clone();
        let logvar_raw = logvar_head.as_ref().map(|c| c.output.clone());
        let z = latent_sample(&mean, logvar_raw.as_ref(), noise.eps.as_ref());
        let mut decoder = Vec::new();
        let mut d = maybe_hcat(&z, c);
        for layer in &m.decoder.layers {
            let cache = cached(layer, &d);
            d = cache.output.clone();
            decoder.push(cache);
        }
        let mut disc = Vec::new();
        let disc_input = m.config.is_adversarial().then(|| {
            let (real, fake) = match m.config.adv_target {
                AdvTarget::Latent => (noise.prior.clone().unwrap(), z.clone()),
                AdvTarget::Reconstruction => (x.clone(), d.clone()),
            };
            let both = Matrix::from_vec(
                real.rows() + fake.rows(),
                real.cols(),
                real.data().iter().chain(fake.data()).copied().collect(),
            )
            .unwrap();
            let mut s = both.clone();
            for layer in &m.discriminator.as_ref().unwrap().layers {
                let cache = cached(layer, &s);
                s = cache.output.clone();
                disc.push(cache);
            }
            both
        });
        Oracle {
            m,
            x,
            c,
            eps: noise.eps.as_ref(),
            batch: x.rows(),
            trunk,
            mean_head,
            logvar_head,
            decoder,
            mean,
            logvar_raw,
            z,
            disc_input,
            disc,
        }
    }

    fn cache(&self, loc: Loc) -> &DenseCache {
        match loc {
            Loc::Trunk(l) => &self.trunk[l],
            Loc::MeanHead => &self.mean_head,
            Loc::LogvarHead => self.logvar_head.as_ref().unwrap(),
            Loc::Decoder(l) => &self.decoder[l],
            Loc::Disc(l) => &self.disc[l],
        }
    }

    /// Objective value for each stacked perturbation of the layer at `loc`.
    fn objectives(&self, loc: Loc, perturbations: &[Perturbation]) -> Vec<f64> {
        let k = perturbations.len();
        let layer = layer_of(self.m, loc);
        let s = stacked_output(self.cache(loc), layer.activation, perturbations);
        match loc {
            Loc::Trunk(l) => {
                let mut h = s;
                for layer in &self.m.encoder.trunk.layers[l + 1..] {
                    h = layer.forward(&h).unwrap();
                }
                let mean = self.m.encoder.mean_head.forward(&h).unwrap();
                let lv = self.m.encoder.logvar_head.as_ref().map(|l| l.forward(&h).unwrap());
                self.outputs_from_latent(k, mean, lv)
            }
            Loc::MeanHead => self.outputs_from_latent(k, s, self.logvar_raw.as_ref().map(|m| tile(m, k))),
            Loc::LogvarHead => self.outputs_from_latent(k, tile(&self.mean, k), Some(s)),
            Loc::Decoder(l) => {
                let mut d = s;
                for layer in &self.m.decoder.layers[l + 1..] {
                    d = layer.forward(&d).unwrap();
                }
                let lv = self.logvar_raw.as_ref().map(|m| tile(m, k));
                self.losses(k, &tile(&self.mean, k), lv.as_ref(), &tile(&self.z, k), &d)
            }
            Loc::Disc(l) => {
                let mut p = s;
                for layer in &self.m.discriminator.as_ref().unwrap().layers[l + 1..] {
                    p = layer.forward(&p).unwrap();
                }
                let b = self.batch;
                (0..k)
                    .map(|g| {
                        let rows = &p.data()[g * 2 * b..(g + 1) * 2 * b];
                        let real: f64 = rows[..b].iter().map(|&v| clamp_p(v).ln()).sum();
                        let fake: f64 = rows[b..].iter().map(|&v| (1.0 - clamp_p(v)).ln()).sum();
                        -(real + fake) / b as f64
                    })
                    .collect()
            }
        }
    }

    fn outputs_from_latent(&self, k: usize, mean: Matrix, lv_raw: Option<Matrix>) -> Vec<f64> {
        let eps = self.eps.map(|e| tile(e, k));
        let z = latent_sample(&mean, lv_raw.as_ref(), eps.as_ref());
        let c = self.c.map(|c| tile(c, k));
        let mut d = maybe_hcat(&z, c.as_ref());
        for layer in &self.m.decoder.layers {
            d = layer.forward(&d).unwrap();
        }
        self.losses(k, &mean, lv_raw.as_ref(), &z, &d)
    }

    fn losses(&self, k: usize, mean: &Matrix, lv_raw: Option<&Matrix>, z: &Matrix, x_hat: &Matrix) -> Vec<f64> {
        let cfg = &self.m.config;
        let b = self.batch;
        let (f, l) = (self.x.cols(), cfg.latent_dim);
        let p = cfg.is_adversarial().then(|| {
            let fake = match cfg.adv_target {
                AdvTarget::Latent => z,
                AdvTarget::Reconstruction => x_hat,
            };
            self.m.discriminator.as_ref().unwrap().forward(fake).unwrap()
        });
        (0..k)
            .map(|g| {
                let mut recon = 0.0;
                for r in 0..b {
                    for (xv, xh) in self.x.row(r).iter().zip(x_hat.row(g * b + r)) {
                        recon += (xh - xv) * (xh - xv);
                    }
                }
                recon /= (b * f) as f64;
                let mut kl = 0.0;
                if let Some(lv) = lv_raw {
                    for r in g * b..(g + 1) * b {
                        for j in 0..l {
                            let (mu, s) = (mean.get(r, j), lv.get(r, j).clamp(-10.0, 10.0));
                            kl += 0.5 * (mu * mu + s.exp() - 1.0 - s);
                        }
                    }
                    kl /= b as f64;
                }
                let adv = p.as_ref().map_or(0.0, |p| {
                    -p.data()[g * b..(g + 1) * b].iter().map(|&v| clamp_p(v).ln()).sum::<f64>() / b as f64
                });
                cfg.cvae_loss_weight * (recon + kl) + cfg.adv_loss_weight * adv
            })
            .collect()
    }
}

fn latent_sample(mean: &Matrix, lv_raw: Option<&Matrix>, eps: Option<&Matrix>) -> Matrix {
    match (lv_raw, eps) {
        (Some(lv), Some(eps)) => {
            let sd = lv.map(|v| (0.5 * v.clamp(-10.0, 10.0)).exp());
            let noise = sd.zip_map(eps, |s, e| s * e).unwrap();
            mean.zip_map(&noise, |a, b| a + b).unwrap()
        }
        _ => mean.clone(),
    }
}

/// Checks every encoder, decoder and discriminator parameter. Generator
/// parameters are checked against the generator objective with the
/// discriminator frozen; discriminator parameters against the
/// discriminator loss with its real and fake inputs frozen.
pub fn check_model(model: &NormativeModel, x: &Matrix, c: Option<&Matrix>, noise: &Noise) -> GradReport {
    let mut work = model.clone();
    let pass = work.forward_generator(x, c, noise).unwrap();
    let adversarial = work.config.is_adversarial();
    let mut disc_grads = Vec::new();
    if adversarial {
        let (real, fake) = work.adversarial_samples(&pass, x, noise).unwrap();
        work.discriminator_backward(&real, &fake).unwrap();
        for layer in &work.discriminator.as_ref().unwrap().layers {
            disc_grads.push((layer.weight.grad.clone(), layer.bias.grad.clone()));
        }
    }
    work.generator_backward(&pass, x).unwrap();

    let mut locs: Vec<Loc> = (0..model.encoder.trunk.layers.len()).map(Loc::Trunk).collect();
    locs.push(Loc::MeanHead);
    if model.encoder.logvar_head.is_some() {
        locs.push(Loc::LogvarHead);
    }
    locs.extend((0..model.decoder.layers.len()).map(Loc::Decoder));
    if adversarial {
        locs.extend((0..disc_grads.len()).map(Loc::Disc));
    }

    let oracle = Oracle::new(model, x, c, noise);
    let base_pattern = model.activation_pattern(x, c, noise).unwrap();
    let mut report = GradReport::default();
    for loc in locs {
        for bias in [false, true] {
            let analytic = match loc {
                Loc::Disc(l) => {
                    let (w, b) = &disc_grads[l];
                    if bias { b.clone() } else { w.clone() }
                }
                _ => {
                    let layer = layer_of(&work, loc);
                    if bias { layer.bias.grad.clone() } else { layer.weight.grad.clone() }
                }
            };
            let out_dim = analytic.cols();
            let n = analytic.data().len();
            for start in (0..n).step_by(CHUNK) {
                let entries: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
                let mut perturbations = Vec::with_capacity(2 * entries.len());
                for &e in &entries {
                    let (i, j) = if bias { (None, e) } else { (Some(e / out_dim), e % out_dim) };
                    perturbations.push((i, j, STEP));
                    perturbations.push((i, j, -STEP));
                }
                let values = oracle.objectives(loc, &perturbations);
                for (t, &e) in entries.iter().enumerate() {
                    let fd = (values[2 * t] - values[2 * t + 1]) / (2.0 * STEP);
                    let an = analytic.data()[e];
                    report.checked += 1;
                    if agrees(fd, an) {
                        report.max_rel_err = report.max_rel_err.max(rel_err(fd, an));
                    } else if crosses_kink(model, loc, bias, e, x, c, noise, &base_pattern) {
                        report.kinks += 1;
                    } else {
                        let name = &param_at(&mut model.clone(), loc, bias).name.clone();
                        report.failures.push(format!("{name}[{e}]: fd {fd:e} vs analytic {an:e}"));
                    }
                }
            }
        }
    }
    report
}

#[allow(clippy::too_many_arguments)]
fn crosses_kink(
    model: &NormativeModel,
    loc: Loc,
    bias: bool,
    entry: usize,
    x: &Matrix,
    c: Option<&Matrix>,
    noise: &Noise,
    base: &[bool],
) -> bool {
    let mut probe = model.clone();
    let original = param_at(&mut probe, loc, bias).value.data()[entry];
    [original + STEP, original - STEP].into_iter().any(|v| {
        param_at(&mut probe, loc, bias).value.data_mut()[entry] = v;
        probe.activation_pattern(x, c, noise).unwrap() != base
    })
}

/// Builds a model from `config` and checks it on a random batch.
pub fn check_variant(config: ModelConfig, seed: u64, batch: usize) -> GradReport {
    let mut rng = Rng::new(seed);
    let model = NormativeModel::new(config, &mut rng).unwrap();
    let x = random_matrix(&mut rng, batch, model.config.input_dim);
    let c = (model.config.cond_dim > 0).then(|| {
        let mut c = random_covariates(&mut rng, batch);
        if model.config.cond_dim != 22 {
            c = random_matrix(&mut rng, batch, model.config.cond_dim);
        }
        c
    });
    let noise = Noise::sample(&model, batch, &mut rng);
    check_model(&model, &x, c.as_ref(), &noise)
}
