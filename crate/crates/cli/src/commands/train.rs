use std::path::{Path, PathBuf};

use serde::Serialize;

use lil_core::checkpoint::Checkpoint;
use lil_core::datasets::LabeledDataset;
use lil_core::error::Result;
use lil_core::linalg::Rng;
use lil_core::metrics::accuracy;
use lil_core::network::StackedLilNetwork;
use lil_core::trainer::{train, TrainReport};

use crate::config::ExperimentConfig;

use super::{ensure_parent_dir, write_sidecar};

#[derive(Serialize)]
struct RunReport<'a> {
    train_report: &'a TrainReport,
    /// Test accuracy per hierarchy level; None when the test split is
    /// empty.
    test_accuracy: Option<Vec<f64>>,
}

pub fn run(
    config_path: &Path,
    beta_override: Option<f64>,
    epochs_override: Option<usize>,
    seed_override: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(epochs) = epochs_override {
        cfg.train.epochs = epochs;
    }
    if let Some(seed) = seed_override {
        cfg.train.seed = seed;
    }
    cfg.validate()?;

    let out = match (out, &cfg.output_dir) {
        (Some(path), _) => path.to_path_buf(),
        (None, Some(dir)) => dir.join("model.json"),
        (None, None) => {
            return Err(lil_core::error::Error::invalid(
                "no --out given and the config has no output_dir",
            ))
        }
    };
    let out = out.as_path();

    let base_dir = config_path.parent().unwrap_or(Path::new("."));
    let (train_ds, test_ds) = cfg.dataset.load(base_dir)?;

    let betas: Vec<f64> = match (beta_override, &cfg.beta_sweep) {
        (Some(beta), _) => vec![beta],
        (None, Some(sweep)) => sweep.clone(),
        (None, None) => vec![cfg.train.weights.beta],
    };
    let multi = betas.len() > 1;
    for beta in betas {
        let mut run_cfg = cfg.clone();
        run_cfg.train.weights.beta = beta;
        let model_path = if multi {
            suffixed(out, &format!("-beta{beta}"))
        } else {
            out.to_path_buf()
        };
        train_one(&run_cfg, &train_ds, &test_ds, &model_path)?;
    }
    Ok(())
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    let ext = path.extension().map(|e| e.to_string_lossy().into_owned());
    let name = match ext {
        Some(ext) => format!("{stem}{suffix}.{ext}"),
        None => format!("{stem}{suffix}"),
    };
    path.with_file_name(name)
}

fn train_one(
    cfg: &ExperimentConfig,
    train_ds: &LabeledDataset,
    test_ds: &LabeledDataset,
    model_path: &Path,
) -> Result<()> {
    let start = std::time::Instant::now();
    let mut rng = Rng::new(cfg.train.seed);
    let mut net = StackedLilNetwork::init(&cfg.network, &mut rng)?;
    let report = train(&mut net, train_ds, &cfg.train, &mut rng)?;

    let test_accuracy = if test_ds.is_empty() {
        None
    } else {
        let plan = cfg.train.resolved_plan(net.num_blocks())?;
        let mut accs = Vec::with_capacity(plan.len());
        for &level in &plan {
            accs.push(accuracy(&net, test_ds, level)?);
        }
        Some(accs)
    };

    ensure_parent_dir(model_path)?;
    let ckpt = Checkpoint::capture(&net, &cfg.network, &cfg.train, cfg.dataset.kind());
    ckpt.save(model_path)?;

    let stem = model_path.with_extension("");
    let report_path = stem.with_extension("report.json");
    let run_report = RunReport {
        train_report: &report,
        test_accuracy: test_accuracy.clone(),
    };
    let mut text = serde_json::to_string_pretty(&run_report)?;
    text.push('\n');
    std::fs::write(&report_path, text)?;

    let losses_path = stem.with_extension("losses.csv");
    std::fs::write(&losses_path, report.losses_csv())?;

    write_sidecar(
        &stem.with_extension("meta.json"),
        "train",
        start.elapsed().as_secs_f64(),
    )?;

    println!(
        "trained beta={} for {} epochs: train accuracy {:?}{} -> {}",
        cfg.train.weights.beta,
        cfg.train.epochs,
        report.final_train_accuracy,
        match &test_accuracy {
            Some(a) => format!(", test accuracy {a:?}"),
            None => String::new(),
        },
        model_path.display()
    );
    Ok(())
}
