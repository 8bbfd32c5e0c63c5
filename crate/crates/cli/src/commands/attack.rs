use std::path::Path;

use lil_core::attacks::{
    log_spaced, robust_accuracy_sweep, sweep_csv, AttackConfig, AttackKind, AttackLoss, LossContext,
};
use lil_core::checkpoint::Checkpoint;
use lil_core::datasets::{load_mnist_idx, LabeledDataset, SplitTag};
use lil_core::error::{Error, Result};

use super::{ensure_parent_dir, write_sidecar};
use crate::config::{DatasetSpec, ExperimentConfig};

/// Attack invocation after flag parsing; `None` fields fall back to the
/// experiment config's attack section (when `--config` is given), then to
/// built-in defaults.
pub struct AttackRequest<'a> {
    pub model: &'a Path,
    pub data: &'a Path,
    pub config: Option<&'a Path>,
    pub kind: Option<&'a str>,
    pub sweep: Option<(f64, f64, usize)>,
    pub epsilons: Option<Vec<f64>>,
    pub ball: Option<f64>,
    pub steps: Option<usize>,
    pub samples: Option<usize>,
    pub loss: &'a str,
    pub split: &'a str,
    pub clip_min: Option<f64>,
    pub clip_max: Option<f64>,
    pub batch: usize,
    pub out: &'a Path,
}

/// Load the dataset a trained model should be evaluated against. A
/// directory is treated as an MNIST pair with the conventional test file
/// names; anything else is a dataset CSV filtered by `split`.
pub fn load_eval_data(data: &Path, split: &str, samples: Option<usize>) -> Result<LabeledDataset> {
    let ds = if data.is_dir() {
        load_mnist_idx(
            &data.join("t10k-images-idx3-ubyte"),
            &data.join("t10k-labels-idx1-ubyte"),
        )?
    } else {
        let text = std::fs::read_to_string(data)?;
        let full = LabeledDataset::from_csv(&text)?;
        match split {
            "train" => full.subset(SplitTag::Train)?,
            "test" => full.subset(SplitTag::Test)?,
            "all" => full,
            other => return Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    };
    match samples {
        Some(n) => ds.take(n),
        None => Ok(ds),
    }
}

pub fn run(req: AttackRequest) -> Result<()> {
    let start = std::time::Instant::now();
    let section = match req.config {
        Some(path) => ExperimentConfig::load(path)?.attack,
        None => None,
    };
    let kind_str = match (req.kind, &section) {
        (Some(k), _) => k.to_string(),
        (None, Some(s)) => s.kind.clone(),
        (None, None) => "fgsm".to_string(),
    };
    let kind = match kind_str.as_str() {
        "fgsm" => AttackKind::Fgsm,
        "pgd" => AttackKind::Pgd,
        other => return Err(Error::invalid(format!("unknown attack kind {other:?}"))),
    };
    let attack_loss = match req.loss {
        "combined" => AttackLoss::Combined,
        "cse" => AttackLoss::CrossEntropyOnly,
        other => return Err(Error::invalid(format!("unknown attack loss {other:?}"))),
    };
    let sweep: Vec<f64> = match (&req.epsilons, req.sweep, &section) {
        (Some(eps), _, _) => eps.clone(),
        (None, Some((lo, hi, n)), _) => log_spaced(lo, hi, n),
        (None, None, Some(s)) => log_spaced(s.sweep_lo, s.sweep_hi, s.sweep_n),
        (None, None, None) => log_spaced(0.01, 1.0, 20),
    };
    let ball = req.ball.or(section.as_ref().map(|s| s.ball)).unwrap_or(0.5);
    let steps = req
        .steps
        .or(section.as_ref().map(|s| s.steps))
        .unwrap_or(10);
    let samples = req.samples.or(section.as_ref().and_then(|s| s.samples));

    let ckpt = Checkpoint::load(req.model)?;
    let net = ckpt.restore()?;
    let ds = load_eval_data(req.data, req.split, samples)?;

    let (default_min, default_max) = DatasetSpec::clip_range(&ckpt.dataset_kind);
    let clip = (
        req.clip_min.unwrap_or(default_min),
        req.clip_max.unwrap_or(default_max),
    );
    let plan = ckpt.train.resolved_plan(net.num_blocks())?;
    let ctx = LossContext {
        weights: ckpt.train.weights,
        loss: attack_loss,
        global_isometry: ckpt.train.global_isometry,
        hierarchy_plan: plan,
    };
    let base = AttackConfig {
        kind,
        epsilon: 0.0,
        ball_radius: ball,
        n_steps: steps,
        clip_min: clip.0,
        clip_max: clip.1,
    };
    base.validate()?;

    let points = robust_accuracy_sweep(&net, &ds, kind, &sweep, &ctx, &base, req.batch)?;

    let mut csv = String::new();
    csv.push_str(&format!("# model={}\n", req.model.display()));
    csv.push_str(&format!("# attack={}\n", kind.as_str()));
    csv.push_str(&format!("# loss={}\n", req.loss));
    csv.push_str(&format!(
        "# alpha={} beta={}\n",
        ckpt.train.weights.alpha, ckpt.train.weights.beta
    ));
    if kind == AttackKind::Pgd {
        csv.push_str(&format!("# ball={ball} steps={steps}\n"));
    }
    csv.push_str(&format!("# clip_min={} clip_max={}\n", clip.0, clip.1));
    csv.push_str(&sweep_csv(ckpt.train.weights.beta, kind, &points));

    ensure_parent_dir(req.out)?;
    std::fs::write(req.out, csv)?;
    write_sidecar(
        &req.out.with_extension("meta.json"),
        "attack",
        start.elapsed().as_secs_f64(),
    )?;
    println!(
        "attacked {} samples at {} step sizes -> {}",
        points.first().map_or(0, |p| p.n_samples),
        points.len(),
        req.out.display()
    );
    Ok(())
}
