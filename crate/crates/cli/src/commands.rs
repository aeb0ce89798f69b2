use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use acvae_core::datapipe::{
    aggregate_sessions, generate_synthetic_cohort, ingest_csv, prepare, split_indices, write_cohort, BinEdges, Cohort,
    Gender, Group, PreparedDataset, RobustScaler, SubjectRecord, SynthSpec,
};
use acvae_core::diffcore::Rng;
use acvae_core::evaluator::{
    bootstrap_evaluate, boxplot_svg, deviation_maps, effect_sizes, repeat_dataset, roc_auc, write_auc_csv,
    write_deviations_csv, write_effect_sizes_csv, write_outputs, EffectSizeResult, EvaluationReport, ExperimentConfig,
    RepeatSeeds, Summary,
};
use acvae_core::models::{NormativeModel, Variant};
use acvae_core::parallel::Execution;
use acvae_core::trainer::{train_with_log, TrainLog};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::{load_partial, TrainRunConfig};
use crate::manifest::Run;

pub const COHORT_FILE: &str = "cohort.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const PREPROCESS_FILE: &str = "preprocess.json";
pub const TRAINLOG_FILE: &str = "trainlog.csv";

/// Fitted preprocessing of a train run, enough to rebuild its test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    pub session_window_days: u32,
    pub scaler: RobustScaler,
    pub age_bins: BinEdges,
    pub icv_bins: BinEdges,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl Preprocess {
    fn of(data: &PreparedDataset, session_window_days: u32) -> Self {
        Preprocess {
            session_window_days,
            scaler: data.scaler.clone(),
            age_bins: data.age_bins.clone(),
            icv_bins: data.icv_bins.clone(),
            train_ids: data.train_ids.clone(),
            test_ids: data.test_ids.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingleEvaluation {
    pub method: Variant,
    pub n_hc: usize,
    pub n_ad: usize,
    pub auc: f64,
    pub hc_deviation: Summary,
    pub ad_deviation: Summary,
    pub selected_regions: Vec<usize>,
    pub effect_sizes: Vec<EffectSizeResult>,
}

fn write_json<T: Serialize>(run: &mut Run, name: &str, value: &T) -> Result<PathBuf> {
    let path = run.path(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    run.wrote(path.clone());
    Ok(path)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn load_cohort(run: &mut Run, data: &Path, window_days: u32) -> Result<Cohort> {
    run.input(data);
    let raw = ingest_csv(data).with_context(|| format!("reading cohort {}", data.display()))?;
    Ok(aggregate_sessions(&raw, window_days)?)
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Group counts, gender split, age and ICV as a two-column table.
pub fn cohort_summary(cohort: &Cohort) -> String {
    let groups = [Group::HC, Group::AD];
    let column = |g: Group, f: &dyn Fn(&SubjectRecord) -> f64| cohort.of_group(g).map(f).collect::<Vec<f64>>();
    let mut rows: Vec<(String, [String; 2])> = Vec::new();
    rows.push(("Num".into(), groups.map(|g| cohort.count(g).to_string())));
    rows.push((
        "Gender (M/F)".into(),
        groups.map(|g| {
            let m = cohort.of_group(g).filter(|r| r.gender == Gender::M).count();
            format!("{m}/{}", cohort.count(g) - m)
        }),
    ));
    let stat = |f: &dyn Fn(&SubjectRecord) -> f64| {
        groups.map(|g| {
            let (mean, sd) = mean_sd(&column(g, f));
            format!("{mean:.1}±{sd:.1}")
        })
    };
    rows.push(("Age (mean±std)".into(), stat(&|r| r.age)));
    rows.push(("ICV (mean±std)".into(), stat(&|r| r.roi.iter().sum())));

    let mut out = String::new();
    let _ = writeln!(out, "{:<16} {:>20} {:>20}", "", "HC", "AD");
    for (label, cells) in rows {
        let _ = writeln!(out, "{label:<16} {:>20} {:>20}", cells[0], cells[1]);
    }
    out
}

pub fn auc_table(report: &EvaluationReport) -> String {
    let mut out = format!("{:<8} {:>10} {:>10} {:>8}\n", "method", "mean AUC", "std", "regions");
    for m in &report.methods {
        let _ = writeln!(out, "{:<8} {:>10.4} {:>10.4} {:>8}", m.method, m.mean_auc, m.std_auc, m.selected_regions.len());
    }
    out
}

pub fn synth(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut spec: SynthSpec = load_partial(config)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let mut run = Run::start("synth", out, config, spec.seed)?;
    let result: Result<()> = (|| {
        run.config(&spec)?;
        let cohort = generate_synthetic_cohort(&spec)?;
        let path = run.path(COHORT_FILE);
        write_cohort(create(&path)?, &cohort)?;
        run.wrote(path);
        print!("{}", cohort_summary(&cohort));
        Ok(())
    })();
    run.finish(result)
}

fn experiment(config: Option<&Path>, seed: Option<u64>, methods: Option<Vec<Variant>>) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = load_partial(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(m) = methods {
        cfg.methods = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn prepare_cmd(data: &Path, config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = experiment(config, seed, None)?;
    let mut run = Run::start("prepare", out, config, cfg.seed)?;
    let result: Result<()> = (|| {
        run.config(&cfg)?;
        let cohort = load_cohort(&mut run, data, cfg.eval.session_window_days)?;
        let prepared = repeat_dataset(&cohort, &cfg, 0)?;
        write_json(&mut run, "prepared.json", &prepared)?;
        write_json(&mut run, PREPROCESS_FILE, &Preprocess::of(&prepared, cfg.eval.session_window_days))?;
        println!(
            "{} training rows, {} test rows ({} AD)",
            prepared.train_ids.len(),
            prepared.test_ids.len(),
            prepared.test_labels.iter().filter(|&&g| g == Group::AD).count()
        );
        Ok(())
    })();
    run.finish(result)
}

/// Trains one model on the first repeat's split. The seeds match repeat 0
/// of `bootstrap`, so both commands produce the same model.
pub fn train(data: &Path, config: Option<&Path>, seed: Option<u64>, method: Option<Variant>, out: &Path) -> Result<()> {
    let mut cfg: TrainRunConfig = load_partial(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(m) = method {
        cfg.variant = m;
    }
    cfg.validate()?;
    let mut run = Run::start("train", out, config, cfg.seed)?;
    let result: Result<()> = (|| {
        run.config(&cfg)?;
        let cohort = load_cohort(&mut run, data, cfg.session_window_days)?;
        let seeds = RepeatSeeds::new(cfg.seed, 0);
        let (train_idx, test_idx) = split_indices(&cohort, cfg.hc_train_fraction, &mut Rng::new(seeds.split))?;
        let prepared = prepare(&cohort, &train_idx, &test_idx)?;
        write_json(&mut run, PREPROCESS_FILE, &Preprocess::of(&prepared, cfg.session_window_days))?;

        let variant = cfg.variant;
        let mut model = NormativeModel::new(cfg.model_config()?, &mut Rng::new(seeds.model_init(variant)))?;
        let train_c = variant.is_conditional().then_some(&prepared.train_c);
        let mut log = TrainLog::default();
        let trained = train_with_log(
            &mut model,
            &prepared.train_x,
            train_c,
            &cfg.train.with_seed(seeds.training(variant)),
            &mut log,
        );
        // The log is kept even when training aborts.
        let log_path = run.path(TRAINLOG_FILE);
        log.write_csv(create(&log_path)?)?;
        run.wrote(log_path);
        trained.context("training aborted; completed epochs are in trainlog.csv")?;

        let ckpt = run.path(CHECKPOINT_FILE);
        model.save(&ckpt)?;
        run.wrote(ckpt);
        if let (Some(first), Some(last)) = (log.epochs.first(), log.epochs.last()) {
            println!("{variant}: {} epochs, recon {:.5} -> {:.5}", log.epochs.len(), first.recon, last.recon);
        }
        Ok(())
    })();
    run.finish(result)
}

fn indices_of(cohort: &Cohort, ids: &[String]) -> Result<Vec<usize>> {
    let keys: std::collections::HashMap<String, usize> =
        cohort.records.iter().enumerate().map(|(i, r)| (r.key(), i)).collect();
    ids.iter()
        .map(|id| keys.get(id).copied().with_context(|| format!("record `{id}` from the training run is not in the data")))
        .collect()
}

/// Scores the held-out rows of a `train` run.
pub fn evaluate(
    data: &Path,
    model_dir: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    exec: Execution,
    out: &Path,
) -> Result<()> {
    let cfg = experiment(config, seed, None)?;
    let mut run = Run::start("evaluate", out, config, cfg.seed)?;
    let result: Result<()> = (|| {
        run.config(&cfg)?;
        let pre_path = model_dir.join(PREPROCESS_FILE);
        let ckpt_path = model_dir.join(CHECKPOINT_FILE);
        run.input(&pre_path);
        run.input(&ckpt_path);
        let pre: Preprocess = serde_json::from_str(
            &fs::read_to_string(&pre_path).with_context(|| format!("reading {}", pre_path.display()))?,
        )?;
        let model = NormativeModel::load(&ckpt_path).with_context(|| format!("loading {}", ckpt_path.display()))?;
        let cohort = load_cohort(&mut run, data, pre.session_window_days)?;
        let prepared = prepare(&cohort, &indices_of(&cohort, &pre.train_ids)?, &indices_of(&cohort, &pre.test_ids)?)?;
        if prepared.scaler != pre.scaler || prepared.age_bins != pre.age_bins || prepared.icv_bins != pre.icv_bins {
            bail!("data differ from the training run: refitted preprocessing does not match {}", pre_path.display());
        }

        let variant = model.config.variant;
        let test_c = variant.is_conditional().then_some(&prepared.test_c);
        let maps = deviation_maps(&model, &prepared.test_x, test_c, &prepared.test_ids, &prepared.test_labels)?;
        let (hc, ad): (Vec<_>, Vec<_>) = maps.iter().cloned().partition(|m| m.group == Group::HC);
        let d = |v: &[acvae_core::evaluator::DeviationMap]| v.iter().map(|m| m.d_mse).collect::<Vec<f64>>();
        let effects = effect_sizes(&hc, &ad, &cfg.eval.effect, cfg.seed, exec)?;
        let report = SingleEvaluation {
            method: variant,
            n_hc: hc.len(),
            n_ad: ad.len(),
            auc: roc_auc(&d(&hc), &d(&ad))?,
            hc_deviation: Summary::of(&d(&hc))?,
            ad_deviation: Summary::of(&d(&ad))?,
            selected_regions: effects.iter().filter(|e| e.selected).map(|e| e.region).collect(),
            effect_sizes: effects,
        };
        write_json(&mut run, "evaluation.json", &report)?;
        let dev = run.path("deviations.csv");
        write_deviations_csv(&maps, create(&dev)?)?;
        run.wrote(dev);
        let eff = run.path("effect_sizes.csv");
        write_effect_sizes_csv(&report.effect_sizes, create(&eff)?)?;
        run.wrote(eff);
        println!(
            "{variant}: AUC {:.4} on {} HC / {} AD, {} regions selected",
            report.auc,
            report.n_hc,
            report.n_ad,
            report.selected_regions.len()
        );
        Ok(())
    })();
    run.finish(result)
}

pub fn bootstrap(
    data: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    methods: Option<Vec<Variant>>,
    exec: Execution,
    out: &Path,
) -> Result<()> {
    let cfg = experiment(config, seed, methods)?;
    let mut run = Run::start("bootstrap", out, config, cfg.seed)?;
    let result: Result<()> = (|| {
        run.config(&cfg)?;
        run.input(data);
        let cohort = ingest_csv(data).with_context(|| format!("reading cohort {}", data.display()))?;
        let outcome = bootstrap_evaluate(&cohort, &cfg, exec)?;
        for path in write_outputs(&outcome, run.dir())? {
            run.wrote(path);
        }
        print!("{}", auc_table(&outcome.report));
        Ok(())
    })();
    run.finish(result)
}

/// Re-renders the plot and AUC table of an existing `report.json`.
pub fn report(data: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(data).with_context(|| format!("reading {}", data.display()))?;
    let report: EvaluationReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", data.display()))?;
    let mut run = Run::start("report", out, None, report.config.seed)?;
    let result: Result<()> = (|| {
        run.config(&report.config)?;
        run.input(data);
        let svg = run.path("boxplot.svg");
        fs::write(&svg, boxplot_svg(&report))?;
        run.wrote(svg);
        let csv = run.path("auc_per_repeat.csv");
        write_auc_csv(&report, create(&csv)?)?;
        run.wrote(csv);
        print!("{}", auc_table(&report));
        Ok(())
    })();
    run.finish(result)
}
