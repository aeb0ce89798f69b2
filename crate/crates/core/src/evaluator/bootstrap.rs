use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::deviation::{deviation_maps, deviation_maps_sampled, DeviationMap};
use super::metrics::{effect_sizes, roc_auc, EffectSettings, EffectSizeResult};
use crate::datapipe::{aggregate_sessions, prepare, quantile, split_indices, Cohort, Group, PreparedDataset};
use crate::diffcore::{derive_seed, Rng};
use crate::error::{Error, Result};
use crate::models::{ModelSettings, NormativeModel, Variant};
use crate::parallel::{try_map_indexed, Execution};
use crate::trainer::{screen, screening_grid, train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_repeats: usize,
    pub hc_train_fraction: f64,
    pub session_window_days: u32,
    pub effect: EffectSettings,
    /// Draw the training rows with replacement from each repeat's HC split.
    pub resample_train: bool,
    /// Score by averaging over this many posterior samples instead of the
    /// posterior mean.
    pub mc_samples: Option<usize>,
    /// Pick latent/hidden sizes per repeat and method by the screening grid.
    pub screen: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_repeats: 10,
            hc_train_fraction: 0.8,
            session_window_days: 100,
            effect: EffectSettings::default(),
            resample_train: false,
            mc_samples: None,
            screen: false,
        }
    }
}

/// Everything numeric about an experiment. Per-run seeds are derived from
/// `seed`; `train.seed` is ignored by [`bootstrap_evaluate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub methods: Vec<Variant>,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 2023,
            methods: Variant::ALL.to_vec(),
            model: ModelSettings::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::config("no methods requested"));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::config(format!("method {m} listed twice")));
            }
            self.model.config_for(*m).validate()?;
        }
        self.train.validate()?;
        self.eval.effect.validate()?;
        if self.eval.n_repeats == 0 {
            return Err(Error::config("n_repeats must be at least 1"));
        }
        if self.eval.mc_samples == Some(0) {
            return Err(Error::config("mc_samples must be at least 1"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Five-number summary plus mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::data("cannot summarize an empty sample"));
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Ok(Summary {
            n: s.len(),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            min: s[0],
            q1: quantile(&s, 0.25),
            median: quantile(&s, 0.5),
            q3: quantile(&s, 0.75),
            max: s[s.len() - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMeans {
    pub hc: f64,
    pub ad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Variant,
    pub aucs: Vec<f64>,
    pub mean_auc: f64,
    /// Sample standard deviation; 0 for a single repeat.
    pub std_auc: f64,
    /// Subject-level D_MSE pooled over repeats.
    pub hc_deviation: Summary,
    pub ad_deviation: Summary,
    /// Mean D_MSE per group in each repeat.
    pub repeat_means: Vec<GroupMeans>,
    /// Repeat whose AUC is the (lower) median; effect sizes come from it.
    pub median_repeat: usize,
    pub effect_sizes: Vec<EffectSizeResult>,
    pub selected_regions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: ExperimentConfig,
    pub n_hc: usize,
    pub n_ad: usize,
    pub methods: Vec<MethodReport>,
}

/// Report plus the deviation maps of each method's median repeat.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOutcome {
    pub report: EvaluationReport,
    pub deviations: Vec<(Variant, Vec<DeviationMap>)>,
}

fn variant_index(v: Variant) -> u64 {
    Variant::ALL.iter().position(|&a| a == v).expect("variant listed in ALL") as u64
}

/// Seeds of one repeat. Model seeds depend on the variant, not on its
/// position in the method list, so adding a method leaves the others
/// unchanged.
#[derive(Debug, Clone, Copy)]
pub struct RepeatSeeds {
    pub split: u64,
}

impl RepeatSeeds {
    pub fn new(master: u64, repeat: usize) -> Self {
        RepeatSeeds { split: derive_seed(master, repeat as u64) }
    }

    fn stream(&self, v: Variant, purpose: u64) -> u64 {
        derive_seed(self.split, 1 + 8 * variant_index(v) + purpose)
    }

    pub fn model_init(&self, v: Variant) -> u64 {
        self.stream(v, 0)
    }

    pub fn training(&self, v: Variant) -> u64 {
        self.stream(v, 1)
    }

    fn scoring(&self, v: Variant) -> u64 {
        self.stream(v, 2)
    }

    fn screening(&self, v: Variant) -> u64 {
        self.stream(v, 3)
    }

    fn resample(&self) -> u64 {
        derive_seed(self.split, 0)
    }
}

/// The train/test split of one repeat with scalers and bins fit on its
/// training rows.
pub fn repeat_dataset(cohort: &Cohort, config: &ExperimentConfig, repeat: usize) -> Result<PreparedDataset> {
    let seeds = RepeatSeeds::new(config.seed, repeat);
    let (mut train_idx, test_idx) =
        split_indices(cohort, config.eval.hc_train_fraction, &mut Rng::new(seeds.split))?;
    if config.eval.resample_train {
        let mut rng = Rng::new(seeds.resample());
        train_idx = (0..train_idx.len()).map(|_| train_idx[rng.below(train_idx.len())]).collect();
    }
    prepare(cohort, &train_idx, &test_idx)
}

/// Trains one method on a prepared split and scores the test rows.
pub fn train_and_score(
    data: &PreparedDataset,
    config: &ExperimentConfig,
    variant: Variant,
    seeds: RepeatSeeds,
) -> Result<(NormativeModel, Vec<DeviationMap>)> {
    let conditional = variant.is_conditional();
    let train_c = conditional.then_some(&data.train_c);
    let test_c = conditional.then_some(&data.test_c);
    let mut model_cfg = config.model.config_for(variant);
    if config.eval.screen {
        let grid = screening_grid(&config.model, variant);
        let result = screen(&grid, &data.train_x, train_c, &config.train, seeds.screening(variant), Execution::Sequential)?;
        model_cfg = result.best;
    }
    let model = NormativeModel::new(model_cfg, &mut Rng::new(seeds.model_init(variant)))?;
    let (model, _) = train(model, &data.train_x, train_c, &config.train.with_seed(seeds.training(variant)))?;
    let maps = match config.eval.mc_samples {
        Some(k) => deviation_maps_sampled(
            &model,
            &data.test_x,
            test_c,
            &data.test_ids,
            &data.test_labels,
            k,
            &mut Rng::new(seeds.scoring(variant)),
        )?,
        None => deviation_maps(&model, &data.test_x, test_c, &data.test_ids, &data.test_labels)?,
    };
    Ok((model, maps))
}

fn split_groups(maps: &[DeviationMap]) -> (Vec<DeviationMap>, Vec<DeviationMap>) {
    maps.iter().cloned().partition(|m| m.group == Group::HC)
}

fn d_mse(maps: &[DeviationMap]) -> Vec<f64> {
    maps.iter().map(|m| m.d_mse).collect()
}

/// Repeats the whole experiment `n_repeats` times. Every repeat redraws the
/// HC train/test split from its own derived seed, refits preprocessing,
/// retrains each method and scores the held-out HC and all AD records.
/// Repeat × method jobs run under `exec`; the result does not depend on it.
pub fn bootstrap_evaluate(cohort: &Cohort, config: &ExperimentConfig, exec: Execution) -> Result<BootstrapOutcome> {
    config.validate()?;
    let cohort = aggregate_sessions(cohort, config.eval.session_window_days)?;
    let (repeats, methods) = (config.eval.n_repeats, &config.methods);
    let runs = try_map_indexed(repeats * methods.len(), exec, |job| -> Result<Vec<DeviationMap>> {
        let (repeat, variant) = (job / methods.len(), methods[job % methods.len()]);
        let data = repeat_dataset(&cohort, config, repeat)?;
        Ok(train_and_score(&data, config, variant, RepeatSeeds::new(config.seed, repeat))?.1)
    })?;

    let mut reports = Vec::new();
    let mut deviations = Vec::new();
    for (mi, &variant) in methods.iter().enumerate() {
        let per_repeat: Vec<&Vec<DeviationMap>> = (0..repeats).map(|r| &runs[r * methods.len() + mi]).collect();
        let mut aucs = Vec::with_capacity(repeats);
        let mut repeat_means = Vec::with_capacity(repeats);
        let (mut pooled_hc, mut pooled_ad) = (Vec::new(), Vec::new());
        for maps in &per_repeat {
            let (hc, ad) = split_groups(maps);
            let (h, a) = (d_mse(&hc), d_mse(&ad));
            aucs.push(roc_auc(&h, &a)?);
            repeat_means.push(GroupMeans {
                hc: h.iter().sum::<f64>() / h.len() as f64,
                ad: a.iter().sum::<f64>() / a.len() as f64,
            });
            pooled_hc.extend(h);
            pooled_ad.extend(a);
        }
        let mean_auc = aucs.iter().sum::<f64>() / repeats as f64;
        let std_auc = if repeats > 1 {
            (aucs.iter().map(|a| (a - mean_auc).powi(2)).sum::<f64>() / (repeats - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut order: Vec<usize> = (0..repeats).collect();
        order.sort_by(|&a, &b| aucs[a].total_cmp(&aucs[b]).then(a.cmp(&b)));
        let median_repeat = order[(repeats - 1) / 2];
        let (hc, ad) = split_groups(per_repeat[median_repeat]);
        let effect_seed = derive_seed(RepeatSeeds::new(config.seed, median_repeat).split, u64::MAX - variant_index(variant));
        let effects = effect_sizes(&hc, &ad, &config.eval.effect, effect_seed, exec)?;
        reports.push(MethodReport {
            method: variant,
            mean_auc,
            std_auc,
            aucs,
            hc_deviation: Summary::of(&pooled_hc)?,
            ad_deviation: Summary::of(&pooled_ad)?,
            repeat_means,
            median_repeat,
            selected_regions: effects.iter().filter(|e| e.selected).map(|e| e.region).collect(),
            effect_sizes: effects,
        });
        deviations.push((variant, per_repeat[median_repeat].clone()));
    }
    let report = EvaluationReport {
        config: config.clone(),
        n_hc: cohort.count(Group::HC),
        n_ad: cohort.count(Group::AD),
        methods: reports,
    };
    Ok(BootstrapOutcome { report, deviations })
}
