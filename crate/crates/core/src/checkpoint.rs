//! Checkpoint serialization: one JSON document holding the network config,
//! per-layer weights and biases as flat f64 lists (shortest round-trip
//! decimal form, so reloading is bit-exact), the seed, and the training
//! configuration it was produced with.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{Layer, LilBlock, MlpParams, NetworkConfig, StackedLilNetwork};
use crate::trainer::TrainConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointLayer {
    pub out_width: usize,
    pub in_width: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointBlock {
    pub body: Vec<CheckpointLayer>,
    pub head: CheckpointLayer,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub seed: u64,
    /// Which generator or file family produced the training data
    /// ("rings", "torus", "mnist", "csv"); consumers use it to pick input
    /// clipping ranges.
    pub dataset_kind: String,
    pub train: TrainConfig,
    pub blocks: Vec<CheckpointBlock>,
}

fn layer_to_checkpoint(layer: &Layer) -> CheckpointLayer {
    CheckpointLayer {
        out_width: layer.out_width(),
        in_width: layer.in_width(),
        weight: layer.weight.data().to_vec(),
        bias: layer.bias.clone(),
    }
}

fn layer_from_checkpoint(layer: &CheckpointLayer) -> Result<Layer> {
    if layer.bias.len() != layer.out_width {
        return Err(Error::format(
            "checkpoint layer",
            format!(
                "bias length {} does not match out width {}",
                layer.bias.len(),
                layer.out_width
            ),
        ));
    }
    if layer.bias.iter().any(|v| !v.is_finite()) {
        return Err(Error::format("checkpoint layer", "non-finite bias entry"));
    }
    Ok(Layer {
        weight: Matrix::from_vec(layer.out_width, layer.in_width, layer.weight.clone())?,
        bias: layer.bias.clone(),
    })
}

impl Checkpoint {
    pub fn capture(
        net: &StackedLilNetwork,
        config: &NetworkConfig,
        train: &TrainConfig,
        dataset_kind: &str,
    ) -> Checkpoint {
        Checkpoint {
            config: config.clone(),
            seed: train.seed,
            dataset_kind: dataset_kind.to_string(),
            train: train.clone(),
            blocks: net
                .blocks
                .iter()
                .map(|b| CheckpointBlock {
                    body: b.body.layers.iter().map(layer_to_checkpoint).collect(),
                    head: layer_to_checkpoint(&b.head),
                })
                .collect(),
        }
    }

    pub fn restore(&self) -> Result<StackedLilNetwork> {
        self.config.validate()?;
        if self.blocks.is_empty() {
            return Err(Error::format("checkpoint", "no blocks"));
        }
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for cb in &self.blocks {
            if cb.body.is_empty() {
                return Err(Error::format("checkpoint block", "empty body"));
            }
            let body = MlpParams {
                layers: cb
                    .body
                    .iter()
                    .map(layer_from_checkpoint)
                    .collect::<Result<_>>()?,
            };
            let head = layer_from_checkpoint(&cb.head)?;
            blocks.push(LilBlock { body, head });
        }
        // widths must chain through the stack
        let net = StackedLilNetwork { blocks };
        if net.input_width() != self.config.input_dim() {
            return Err(Error::format(
                "checkpoint",
                format!(
                    "block 0 input width {} does not match config {}",
                    net.input_width(),
                    self.config.input_dim()
                ),
            ));
        }
        for k in 1..net.blocks.len() {
            if net.blocks[k].input_width() != net.blocks[k - 1].repr_width() {
                return Err(Error::format(
                    "checkpoint",
                    format!("block {k} input width breaks the representation chain"),
                ));
            }
        }
        for (k, b) in net.blocks.iter().enumerate() {
            if b.head.in_width() != b.repr_width() {
                return Err(Error::format(
                    "checkpoint",
                    format!("block {k} head width does not match its representation"),
                ));
            }
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;
    use crate::losses::LossWeights;
    use crate::optim::AdamParams;

    fn sample_train_config() -> TrainConfig {
        TrainConfig {
            weights: LossWeights {
                alpha: 1.0,
                beta: 0.1,
            },
            epochs: 3,
            batch_size: Some(4),
            adam: AdamParams::default(),
            seed: 99,
            hierarchy_plan: None,
            global_isometry: false,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = NetworkConfig {
            layer_widths: vec![3, 7, 5],
            num_classes_per_level: vec![2, 4],
        };
        let net = StackedLilNetwork::init(&cfg, &mut Rng::new(17)).unwrap();
        let ckpt = Checkpoint::capture(&net, &cfg, &sample_train_config(), "torus");

        let dir = std::env::temp_dir().join(format!("lil-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        let restored = loaded.restore().unwrap();
        assert_eq!(restored, net);
        assert_eq!(loaded.dataset_kind, "torus");
        assert_eq!(loaded.train, sample_train_config());

        // saving the reloaded checkpoint reproduces the file byte for byte
        let path2 = dir.join("model2.json");
        loaded.save(&path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn corrupted_checkpoints_are_rejected() {
        let cfg = NetworkConfig {
            layer_widths: vec![3, 4, 4],
            num_classes_per_level: vec![2],
        };
        let net = StackedLilNetwork::init(&cfg, &mut Rng::new(18)).unwrap();
        let mut ckpt = Checkpoint::capture(&net, &cfg, &sample_train_config(), "rings");
        ckpt.blocks[0].head.bias.pop();
        assert!(ckpt.restore().is_err());

        let mut ckpt2 = Checkpoint::capture(&net, &cfg, &sample_train_config(), "rings");
        ckpt2.blocks[0].body[0].weight[0] = f64::NAN;
        assert!(ckpt2.restore().is_err());

        let mut ckpt3 = Checkpoint::capture(&net, &cfg, &sample_train_config(), "rings");
        ckpt3.config.layer_widths = vec![5, 4, 4];
        assert!(ckpt3.restore().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"config":{"layer_widths":[2,3],"num_classes_per_level":[2]},
            "seed":1,"dataset_kind":"rings",
            "train":{"weights":{"alpha":1.0,"beta":0.0},"epochs":1,"seed":1},
            "blocks":[],"surprise":true}"#;
        let parsed: std::result::Result<Checkpoint, _> = serde_json::from_str(text);
        assert!(parsed.is_err());
    }
}
