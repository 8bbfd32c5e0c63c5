//! L-infinity FGSM and PGD attacks driven by input gradients of the
//! training loss.
//!
//! Attacks act on a batch: the isometry term needs pairwise distances, and
//! the reference distances are those of the clean attacked batch itself
//! (frozen across PGD iterations). A single-row batch therefore has an
//! empty pair set and reduces to a pure cross-entropy attack.

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{pairwise_distances, Matrix};
use crate::losses::{build_indexing_matrix, combined_loss, LossWeights};
use crate::network::{backward, StackedLilNetwork};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackKind {
    Fgsm,
    Pgd,
}

impl AttackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Pgd => "pgd",
        }
    }
}

/// Attack hyperparameters. `epsilon` is the step size (the only parameter
/// FGSM uses); `ball_radius` and `n_steps` apply to PGD; `clip_min`/`clip_max`
/// bound the valid input range and may be infinite for unbounded domains.
#[derive(Clone, Copy, Debug)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub epsilon: f64,
    pub ball_radius: f64,
    pub n_steps: usize,
    pub clip_min: f64,
    pub clip_max: f64,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon < 0.0 || self.epsilon.is_nan() {
            return Err(Error::invalid("attack: epsilon must be >= 0"));
        }
        if self.ball_radius < 0.0 || self.ball_radius.is_nan() {
            return Err(Error::invalid("attack: ball radius must be >= 0"));
        }
        if self.clip_min.is_nan() || self.clip_max.is_nan() || self.clip_min > self.clip_max {
            return Err(Error::invalid("attack: bad clip range"));
        }
        Ok(())
    }
}

/// Which loss the attack differentiates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackLoss {
    /// The full training objective, alpha * CSE + beta * ISO.
    Combined,
    /// Cross-entropy alone (beta treated as zero).
    CrossEntropyOnly,
}

/// Loss weighting and label plumbing for attack gradients; mirrors the
/// training setup of the attacked model.
#[derive(Clone, Debug)]
pub struct LossContext {
    pub weights: LossWeights,
    pub loss: AttackLoss,
    pub global_isometry: bool,
    /// Label level each block trains against, block order.
    pub hierarchy_plan: Vec<usize>,
}

impl LossContext {
    fn effective_weights(&self) -> LossWeights {
        match self.loss {
            AttackLoss::Combined => self.weights,
            AttackLoss::CrossEntropyOnly => LossWeights {
                alpha: self.weights.alpha,
                beta: 0.0,
            },
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn clip_in_place(x: &mut Matrix, lo: f64, hi: f64) {
    for v in x.data_mut() {
        *v = v.min(hi).max(lo);
    }
}

/// Gradient of the summed per-block combined losses with respect to the
/// input batch. Input distances for every isometry term come from `d_ref`
/// (the clean batch), so the gradient flows only through the
/// representations; later blocks chain through earlier ones.
pub fn loss_input_gradient(
    net: &StackedLilNetwork,
    x: &Matrix,
    d_ref: &Matrix,
    targets_per_block: &[Vec<usize>],
    ctx: &LossContext,
) -> Result<Matrix> {
    if targets_per_block.len() != net.num_blocks() {
        return Err(Error::invalid(format!(
            "attack gradient: {} target vectors for {} blocks",
            targets_per_block.len(),
            net.num_blocks()
        )));
    }
    let weights = ctx.effective_weights();
    let traces = net.forward(x)?;
    let mut per_block = Vec::with_capacity(traces.len());
    for (k, trace) in traces.iter().enumerate() {
        let g = build_indexing_matrix(&targets_per_block[k], ctx.global_isometry);
        let out = combined_loss(trace, d_ref, &g, &targets_per_block[k], &weights)?;
        per_block.push(out);
    }
    // reverse sweep: later blocks deposit their input gradient onto the
    // previous block's representation
    let mut upstream: Option<Matrix> = None;
    for (k, trace) in traces.iter().enumerate().rev() {
        let mut d_phi = per_block[k].d_phi.clone();
        if let Some(u) = upstream {
            d_phi.add_in_place(&u)?;
        }
        let (_, dx) = backward(&net.blocks[k], trace, &per_block[k].d_logits, &d_phi)?;
        upstream = Some(dx);
    }
    Ok(upstream.expect("at least one block"))
}

/// Single signed-gradient step, then clip: `x' = clip(x + eps * sign(grad))`.
/// `sign(0) = 0`, so flat coordinates are left alone.
pub fn fgsm(
    net: &StackedLilNetwork,
    x: &Matrix,
    targets_per_block: &[Vec<usize>],
    ctx: &LossContext,
    epsilon: f64,
    clip: (f64, f64),
) -> Result<Matrix> {
    if epsilon < 0.0 || epsilon.is_nan() {
        return Err(Error::invalid("fgsm: epsilon must be >= 0"));
    }
    let d_ref = pairwise_distances(x)?;
    let grad = loss_input_gradient(net, x, &d_ref, targets_per_block, ctx)?;
    let mut adv = x.clone();
    for (v, &g) in adv.data_mut().iter_mut().zip(grad.data()) {
        *v += epsilon * sign(g);
    }
    clip_in_place(&mut adv, clip.0, clip.1);
    Ok(adv)
}

/// Iterated signed-gradient ascent with projection onto the L-infinity ball
/// around the clean batch:
/// `x_{k+1} = project(clip(x_k + eps * sign(grad(x_k))))`, starting at the
/// clean input with no random initialization.
pub fn pgd(
    net: &StackedLilNetwork,
    x: &Matrix,
    targets_per_block: &[Vec<usize>],
    ctx: &LossContext,
    config: &AttackConfig,
) -> Result<Matrix> {
    config.validate()?;
    let d_ref = pairwise_distances(x)?;
    let mut adv = x.clone();
    for _ in 0..config.n_steps {
        let grad = loss_input_gradient(net, &adv, &d_ref, targets_per_block, ctx)?;
        for (v, &g) in adv.data_mut().iter_mut().zip(grad.data()) {
            *v += config.epsilon * sign(g);
        }
        clip_in_place(&mut adv, config.clip_min, config.clip_max);
        // project onto the ball coordinate-wise
        for (v, &orig) in adv.data_mut().iter_mut().zip(x.data()) {
            *v = v
                .min(orig + config.ball_radius)
                .max(orig - config.ball_radius);
        }
    }
    Ok(adv)
}

/// One robust-accuracy measurement of the sweep.
#[derive(Clone, Copy, Debug)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub robust_accuracy: f64,
    pub n_samples: usize,
}

/// `n` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (ln_lo + (ln_hi - ln_lo) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

/// For each step size in `sweep`, attack the whole dataset in consecutive
/// batches and measure the fraction still classified correctly at the
/// finest level. FGSM sweeps epsilon directly; PGD sweeps the per-step size
/// with the ball radius and step count fixed by `base`.
pub fn robust_accuracy_sweep(
    net: &StackedLilNetwork,
    ds: &LabeledDataset,
    kind: AttackKind,
    sweep: &[f64],
    ctx: &LossContext,
    base: &AttackConfig,
    batch_size: usize,
) -> Result<Vec<SweepPoint>> {
    if ds.is_empty() {
        return Err(Error::invalid("sweep: empty dataset"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("sweep: zero batch size"));
    }
    if ctx.hierarchy_plan.len() != net.num_blocks() {
        return Err(Error::invalid(
            "sweep: hierarchy plan length does not match block count",
        ));
    }
    for &level in &ctx.hierarchy_plan {
        if level >= ds.levels() {
            return Err(Error::invalid(format!(
                "sweep: plan level {level} outside dataset with {} levels",
                ds.levels()
            )));
        }
    }
    let fine_level = *ctx.hierarchy_plan.last().unwrap();
    let fine_labels = &ds.labels[fine_level];
    let n = ds.len();
    let mut out = Vec::with_capacity(sweep.len());
    for &eps in sweep {
        let mut correct = 0usize;
        let mut start = 0usize;
        while start < n {
            let end = (start + batch_size).min(n);
            let idx: Vec<usize> = (start..end).collect();
            let x = ds.points.select_rows(&idx)?;
            let targets: Vec<Vec<usize>> = ctx
                .hierarchy_plan
                .iter()
                .map(|&lvl| idx.iter().map(|&i| ds.labels[lvl][i]).collect())
                .collect();
            let adv = match kind {
                AttackKind::Fgsm => {
                    fgsm(net, &x, &targets, ctx, eps, (base.clip_min, base.clip_max))?
                }
                AttackKind::Pgd => {
                    let cfg = AttackConfig {
                        kind,
                        epsilon: eps,
                        ..*base
                    };
                    pgd(net, &x, &targets, ctx, &cfg)?
                }
            };
            let traces = net.forward(&adv)?;
            let logits = &traces.last().unwrap().logits;
            for (row, &i) in idx.iter().enumerate() {
                if crate::metrics::argmax(logits.row(row)) == fine_labels[i] {
                    correct += 1;
                }
            }
            start = end;
        }
        out.push(SweepPoint {
            epsilon: eps,
            robust_accuracy: correct as f64 / n as f64,
            n_samples: n,
        });
    }
    Ok(out)
}

/// CSV schema: `beta,attack,epsilon,robust_accuracy,n_samples`.
pub fn sweep_csv(beta: f64, kind: AttackKind, points: &[SweepPoint]) -> String {
    let mut out = String::from("beta,attack,epsilon,robust_accuracy,n_samples\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            beta,
            kind.as_str(),
            p.epsilon,
            p.robust_accuracy,
            p.n_samples
        ));
    }
    out
}
