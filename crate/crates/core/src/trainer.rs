//! The training loop: per batch, one forward pass through the stack, then
//! an independent combined loss, backward pass, and Adam update per block.
//!
//! Input-space distances for every block's isometry term are computed from
//! the original input points of the batch, never from intermediate
//! representations, and the indexing matrix is rebuilt per batch at each
//! block's label level. Gradients stop at block boundaries: the backward
//! pass of block k updates only block k.

use serde::{Deserialize, Serialize};

use crate::datasets::{make_batches, LabeledDataset};
use crate::error::{Error, Result};
use crate::linalg::{pairwise_distances, Rng};
use crate::losses::{build_indexing_matrix, combined_loss, LossWeights};
use crate::metrics::{argmax, isometry_report, IsometryReport};
use crate::network::{backward, StackedLilNetwork};
use crate::optim::{AdamParams, AdamState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub epochs: usize,
    /// None trains full-batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub adam: AdamParams,
    pub seed: u64,
    /// Label level each block trains against; None means block k trains
    /// level k.
    #[serde(default)]
    pub hierarchy_plan: Option<Vec<usize>>,
    #[serde(default)]
    pub global_isometry: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.adam.validate()?;
        if self.epochs == 0 {
            return Err(Error::invalid("train config: epochs must be >= 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("train config: batch size must be >= 1"));
        }
        Ok(())
    }

    pub fn resolved_plan(&self, blocks: usize) -> Result<Vec<usize>> {
        match &self.hierarchy_plan {
            None => Ok((0..blocks).collect()),
            Some(plan) if plan.len() == blocks => Ok(plan.clone()),
            Some(plan) => Err(Error::invalid(format!(
                "hierarchy plan has {} entries for {} blocks",
                plan.len(),
                blocks
            ))),
        }
    }
}

/// Loss record for one block on one batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub batch: usize,
    pub block: usize,
    pub total: f64,
    pub cse: f64,
    pub iso: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub seed: u64,
    pub losses: Vec<LossRecord>,
    /// Accuracy of each block against its planned level, on the training
    /// dataset.
    pub final_train_accuracy: Vec<f64>,
    /// Not serialized: wall time lives in the metadata sidecar so that
    /// report files stay byte-identical across reruns.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl TrainReport {
    /// CSV schema: `epoch,batch,block,loss_total,loss_cse,loss_iso`.
    pub fn losses_csv(&self) -> String {
        let mut out = String::from("epoch,batch,block,loss_total,loss_cse,loss_iso\n");
        for r in &self.losses {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.batch, r.block, r.total, r.cse, r.iso
            ));
        }
        out
    }
}

/// Train the stack in place. Deterministic given the RNG state.
pub fn train(
    net: &mut StackedLilNetwork,
    ds: &LabeledDataset,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainReport> {
    train_impl(net, ds, cfg, rng, false)
}

fn train_impl(
    net: &mut StackedLilNetwork,
    ds: &LabeledDataset,
    cfg: &TrainConfig,
    rng: &mut Rng,
    reverse_block_updates: bool,
) -> Result<TrainReport> {
    let start = std::time::Instant::now();
    cfg.validate()?;
    let plan = cfg.resolved_plan(net.num_blocks())?;
    if ds.is_empty() {
        return Err(Error::invalid("train: empty dataset"));
    }
    if ds.dim() != net.input_width() {
        return Err(Error::invalid(format!(
            "train: dataset dim {} vs network input width {}",
            ds.dim(),
            net.input_width()
        )));
    }
    for (k, &level) in plan.iter().enumerate() {
        if level >= ds.levels() {
            return Err(Error::invalid(format!(
                "train: block {k} plans level {level}, dataset has {} levels",
                ds.levels()
            )));
        }
        let classes = ds.num_classes(level);
        if classes > net.blocks[k].num_classes() {
            return Err(Error::invalid(format!(
                "train: block {k} has {} logits but level {level} has {classes} classes",
                net.blocks[k].num_classes()
            )));
        }
    }
    let n = ds.len();
    let batch_size = cfg.batch_size.unwrap_or(n);
    if batch_size > n {
        return Err(Error::invalid(format!(
            "train: batch size {batch_size} exceeds dataset size {n}"
        )));
    }

    let mut optimizers: Vec<AdamState> = net
        .blocks
        .iter()
        .map(|b| AdamState::new(cfg.adam, &b.param_sizes()))
        .collect::<Result<_>>()?;

    let mut losses = Vec::with_capacity(cfg.epochs * n.div_ceil(batch_size) * plan.len());
    for epoch in 0..cfg.epochs {
        let batches = make_batches(ds, batch_size, rng)?;
        for (batch_idx, batch) in batches.iter().enumerate() {
            let x = ds.points.select_rows(batch)?;
            let d_in = pairwise_distances(&x)?;
            let traces = net.forward(&x)?;
            let mut grads = Vec::with_capacity(plan.len());
            for (k, trace) in traces.iter().enumerate() {
                let level = plan[k];
                let targets: Vec<usize> = batch.iter().map(|&i| ds.labels[level][i]).collect();
                let g = build_indexing_matrix(&targets, cfg.global_isometry);
                let out = combined_loss(trace, &d_in, &g, &targets, &cfg.weights)?;
                if !out.total.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: batch_idx,
                    });
                }
                losses.push(LossRecord {
                    epoch,
                    batch: batch_idx,
                    block: k,
                    total: out.total,
                    cse: out.cse,
                    iso: out.iso,
                });
                let (block_grads, _) = backward(&net.blocks[k], trace, &out.d_logits, &out.d_phi)?;
                grads.push(block_grads);
            }
            // all gradients come from the same forward pass, so the update
            // order across blocks is irrelevant; exercised both ways in tests
            let order: Vec<usize> = if reverse_block_updates {
                (0..plan.len()).rev().collect()
            } else {
                (0..plan.len()).collect()
            };
            for k in order {
                let grad_slices = grads[k].grad_slices();
                let mut params = net.blocks[k].param_slices_mut();
                optimizers[k].step(&mut params, &grad_slices)?;
            }
        }
    }

    let traces = net.forward(&ds.points)?;
    let mut final_train_accuracy = Vec::with_capacity(plan.len());
    for (k, &level) in plan.iter().enumerate() {
        let logits = &traces[k].logits;
        let labels = &ds.labels[level];
        let correct = (0..n)
            .filter(|&i| argmax(logits.row(i)) == labels[i])
            .count();
        final_train_accuracy.push(correct as f64 / n as f64);
    }

    Ok(TrainReport {
        config: cfg.clone(),
        seed: cfg.seed,
        losses,
        final_train_accuracy,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Accuracy plus isometry report at one level (assuming the block-per-level
/// layout).
pub fn evaluate(
    net: &StackedLilNetwork,
    ds: &LabeledDataset,
    level: usize,
) -> Result<(f64, IsometryReport)> {
    let acc = crate::metrics::accuracy(net, ds, level)?;
    let traces = net.forward(&ds.points)?;
    let report = isometry_report(
        &ds.points,
        traces[level].representation(),
        &ds.labels[level],
    )?;
    Ok((acc, report))
}
