//! `acvae`: synthetic cohorts, preprocessing, training and evaluation of
//! normative models from the command line.
//!
//! Numeric experiment settings come from JSON config files; flags only pick
//! paths, the master seed, methods and parallelism.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use acvae_core::models::Variant;
use acvae_core::parallel::Execution;
use anyhow::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "acvae", version, about = "Normative modeling with adversarial conditional VAEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config; missing keys take their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic planted-effect cohort as CSV.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Split a cohort and fit preprocessing on the training rows.
    Prepare {
        #[command(flatten)]
        common: Common,
        /// Cohort CSV.
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
    },
    /// Train one model and write its checkpoint and training log.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        /// Model variant, overriding the config (AE, VAE, CVAE, AAE, ACVAE).
        #[arg(long, value_name = "VARIANT", value_parser = parse_variant)]
        method: Option<Variant>,
    },
    /// Score the held-out rows of a `train` output directory.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        /// Output directory of a `train` run.
        #[arg(long, value_name = "DIR")]
        model: PathBuf,
        /// Worker threads for effect-size bootstraps; 1 runs sequentially.
        #[arg(long, value_name = "N")]
        jobs: Option<usize>,
    },
    /// Repeated split / train / score over all requested methods.
    Bootstrap {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        /// Comma-separated variants, overriding the config.
        #[arg(long, value_name = "LIST", value_delimiter = ',', value_parser = parse_variant)]
        methods: Option<Vec<Variant>>,
        /// Worker threads for repeats; 1 runs sequentially.
        #[arg(long, value_name = "N")]
        jobs: Option<usize>,
    },
    /// Re-render the box plot and AUC table of a bootstrap report.json.
    Report {
        /// report.json written by `bootstrap`.
        #[arg(long, value_name = "JSON")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: acvae_core::Error| e.to_string())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common } => commands::synth(common.config.as_deref(), common.seed, &common.out),
        Command::Prepare { common, data } => {
            commands::prepare_cmd(&data, common.config.as_deref(), common.seed, &common.out)
        }
        Command::Train { common, data, method } => {
            commands::train(&data, common.config.as_deref(), common.seed, method, &common.out)
        }
        Command::Evaluate { common, data, model, jobs } => commands::evaluate(
            &data,
            &model,
            common.config.as_deref(),
            common.seed,
            Execution::from_jobs(jobs),
            &common.out,
        ),
        Command::Bootstrap { common, data, methods, jobs } => commands::bootstrap(
            &data,
            common.config.as_deref(),
            common.seed,
            methods,
            Execution::from_jobs(jobs),
            &common.out,
        ),
        Command::Report { data, out } => commands::report(&data, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
