//! Deviation scoring, ROC-AUC, effect sizes and the repeated-split
//! evaluation protocol.

mod bootstrap;
mod deviation;
mod metrics;
mod output;

pub use bootstrap::{
    bootstrap_evaluate, repeat_dataset, train_and_score, BootstrapOutcome, EvalConfig, EvaluationReport,
    ExperimentConfig, GroupMeans, MethodReport, RepeatSeeds, Summary,
};
pub use deviation::{deviation_maps, deviation_maps_sampled, DeviationMap};
pub use metrics::{cohens_d, effect_sizes, roc_auc, EffectSettings, EffectSizeResult};
pub use output::{
    boxplot_svg, write_auc_csv, write_deviations_csv, write_effect_sizes_csv, write_outputs, write_report_json,
};
