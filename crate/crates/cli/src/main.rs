//! `lil` command line: dataset generation, training, adversarial attack
//! sweeps, and isometry reports.
//!
//! Exit codes: 0 success, 2 validation or config error, 3 numeric failure
//! during training, 4 I/O error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lil_core::error::Error;

#[derive(Parser)]
#[command(name = "lil", version, about = "Locally isometric layer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a toy dataset CSV (entangled rings or torus).
    GenData(GenDataArgs),
    /// Train a model from an experiment config file.
    Train(TrainArgs),
    /// Run a robust-accuracy sweep against a trained model.
    Attack(AttackArgs),
    /// Emit accuracy, isometry, and distance-histogram CSVs.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Dataset family: rings or torus.
    #[arg(long)]
    kind: String,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Points per ring (rings, default 400) or total points (torus,
    /// default 1600).
    #[arg(long)]
    n: Option<usize>,
    /// Gaussian noise variance (default 1e-4 for rings, 1e-3 for torus).
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Fraction of rows tagged as the train split.
    #[arg(long, default_value_t = 0.8)]
    split_fraction: f64,
    /// Torus ring radius R.
    #[arg(long, default_value_t = 2.0)]
    big_radius: f64,
    /// Torus tube radius r.
    #[arg(long, default_value_t = 1.0)]
    small_radius: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Override the isometry weight (disables any beta_sweep).
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint output path; companion .report.json, .losses.csv, and
    /// .meta.json files are written next to it. Defaults to
    /// <config output_dir>/model.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    /// Trained checkpoint.
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV, or a directory holding t10k-*-ubyte MNIST files.
    #[arg(long)]
    data: PathBuf,
    /// Experiment config whose attack section supplies defaults for the
    /// flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// fgsm or pgd (default fgsm).
    #[arg(long)]
    kind: Option<String>,
    /// Step-size sweep: LO HI N (log-spaced, default 0.01 1 20).
    #[arg(long, num_args = 3, value_names = ["LO", "HI", "N"], conflicts_with = "epsilons")]
    sweep: Option<Vec<String>>,
    /// Explicit comma-separated step sizes (may include 0).
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    /// PGD L-infinity ball radius (default 0.5).
    #[arg(long)]
    ball: Option<f64>,
    /// PGD step count (default 10).
    #[arg(long)]
    steps: Option<usize>,
    /// Evaluate only the first N samples.
    #[arg(long)]
    samples: Option<usize>,
    /// Loss to differentiate: combined or cse.
    #[arg(long, default_value = "combined")]
    loss: String,
    /// Row filter for CSV data: train, test, or all.
    #[arg(long, default_value = "all")]
    split: String,
    /// Override the input clip range inferred from the model's dataset.
    #[arg(long)]
    clip_min: Option<f64>,
    #[arg(long)]
    clip_max: Option<f64>,
    /// Attack batch size (the isometry term sees one batch at a time).
    #[arg(long, default_value_t = 100)]
    batch: usize,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV, or a directory holding t10k-*-ubyte MNIST files.
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Histogram bin count.
    #[arg(long, default_value_t = 50)]
    bins: usize,
    /// Evaluate only the first N samples.
    #[arg(long)]
    samples: Option<usize>,
    /// Row filter for CSV data: train, test, or all.
    #[arg(long, default_value = "all")]
    split: String,
    /// Pair budget per class for the isometry summary.
    #[arg(long, default_value_t = 10_000)]
    max_pairs: usize,
    /// Seed for pair subsampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replace representations by the raw inputs (pipeline sanity check;
    /// correlations must be exactly 1).
    #[arg(long)]
    identity_diagnostic: bool,
}

fn parse_sweep(raw: &Option<Vec<String>>) -> Result<Option<(f64, f64, usize)>, Error> {
    match raw {
        None => Ok(None),
        Some(v) => {
            let lo: f64 = v[0]
                .parse()
                .map_err(|_| Error::invalid(format!("bad sweep LO {:?}", v[0])))?;
            let hi: f64 = v[1]
                .parse()
                .map_err(|_| Error::invalid(format!("bad sweep HI {:?}", v[1])))?;
            let n: usize = v[2]
                .parse()
                .map_err(|_| Error::invalid(format!("bad sweep N {:?}", v[2])))?;
            if !(lo > 0.0 && hi >= lo && n >= 1) {
                return Err(Error::invalid("sweep requires 0 < LO <= HI and N >= 1"));
            }
            Ok(Some((lo, hi, n)))
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenData(a) => commands::gen_data::run(
            &a.kind,
            &a.out,
            a.n,
            a.noise,
            a.seed,
            a.split_fraction,
            a.big_radius,
            a.small_radius,
        ),
        Command::Train(a) => {
            commands::train::run(&a.config, a.beta, a.epochs, a.seed, a.out.as_deref())
        }
        Command::Attack(a) => {
            if let Some(eps) = &a.epsilons {
                if eps.is_empty() || eps.iter().any(|e| !e.is_finite() || *e < 0.0) {
                    return Err(Error::invalid("epsilons must be finite and >= 0"));
                }
            }
            commands::attack::run(commands::attack::AttackRequest {
                model: &a.model,
                data: &a.data,
                config: a.config.as_deref(),
                kind: a.kind.as_deref(),
                sweep: parse_sweep(&a.sweep)?,
                epsilons: a.epsilons.clone(),
                ball: a.ball,
                steps: a.steps,
                samples: a.samples,
                loss: &a.loss,
                split: &a.split,
                clip_min: a.clip_min,
                clip_max: a.clip_max,
                batch: a.batch,
                out: &a.out,
            })
        }
        Command::Report(a) => commands::report::run(
            &a.model,
            &a.data,
            &a.out,
            a.bins,
            a.samples,
            &a.split,
            a.max_pairs,
            a.seed,
            a.identity_diagnostic,
        ),
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) | Error::Format { .. } | Error::Json(_) => 2,
        Error::NonFiniteLoss { .. } => 3,
        Error::Io(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap prints help/version on stdout with exit 0, usage errors
            // on stderr with exit 2
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
