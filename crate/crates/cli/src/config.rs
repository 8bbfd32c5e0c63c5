//! Experiment configuration files: dataset spec, network shape, training
//! parameters, and optional attack defaults, with strict validation
//! (unknown keys are rejected everywhere).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lil_core::datasets::{
    gen_entangled_rings, gen_torus, load_mnist_idx, LabeledDataset, SplitTag,
};
use lil_core::error::{Error, Result};
use lil_core::linalg::Rng;
use lil_core::network::NetworkConfig;
use lil_core::trainer::TrainConfig;

fn default_split_fraction() -> f64 {
    0.8
}

fn default_full_split() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingsSpec {
    pub n_per_ring: usize,
    pub noise_variance: f64,
    pub seed: u64,
    #[serde(default = "default_split_fraction")]
    pub split_fraction: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusSpec {
    pub n: usize,
    pub big_radius: f64,
    pub small_radius: f64,
    pub noise_variance: f64,
    pub seed: u64,
    #[serde(default = "default_full_split")]
    pub split_fraction: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistSpec {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// Optional desk-scale mode: keep only the first n training samples.
    #[serde(default)]
    pub subsample: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSpec {
    pub path: PathBuf,
}

/// Externally tagged: `{"rings": {...}}`, `{"torus": {...}}`, ...
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSpec {
    Rings(RingsSpec),
    Torus(TorusSpec),
    Mnist(MnistSpec),
    Csv(CsvSpec),
}

impl DatasetSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            DatasetSpec::Rings(_) => "rings",
            DatasetSpec::Torus(_) => "torus",
            DatasetSpec::Mnist(_) => "mnist",
            DatasetSpec::Csv(_) => "csv",
        }
    }

    /// Materialize (train, test) datasets. Toy generators honor their
    /// split fraction; MNIST keeps the file split; CSV uses the split
    /// column.
    pub fn load(&self, base_dir: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
        match self {
            DatasetSpec::Rings(spec) => {
                let mut rng = Rng::new(spec.seed);
                let mut ds = gen_entangled_rings(spec.n_per_ring, spec.noise_variance, &mut rng)?;
                ds.assign_split(spec.split_fraction, &mut rng)?;
                Ok((ds.subset(SplitTag::Train)?, ds.subset(SplitTag::Test)?))
            }
            DatasetSpec::Torus(spec) => {
                let mut rng = Rng::new(spec.seed);
                let mut ds = gen_torus(
                    spec.n,
                    spec.big_radius,
                    spec.small_radius,
                    spec.noise_variance,
                    &mut rng,
                )?;
                ds.assign_split(spec.split_fraction, &mut rng)?;
                Ok((ds.subset(SplitTag::Train)?, ds.subset(SplitTag::Test)?))
            }
            DatasetSpec::Mnist(spec) => {
                let resolve = |p: &Path| -> PathBuf {
                    if p.is_absolute() {
                        p.to_path_buf()
                    } else {
                        base_dir.join(p)
                    }
                };
                let mut train =
                    load_mnist_idx(&resolve(&spec.train_images), &resolve(&spec.train_labels))?;
                if let Some(n) = spec.subsample {
                    train = train.take(n)?;
                }
                let test =
                    load_mnist_idx(&resolve(&spec.test_images), &resolve(&spec.test_labels))?;
                Ok((train, test))
            }
            DatasetSpec::Csv(spec) => {
                let path = if spec.path.is_absolute() {
                    spec.path.clone()
                } else {
                    base_dir.join(&spec.path)
                };
                let text = std::fs::read_to_string(&path)?;
                let ds = LabeledDataset::from_csv(&text)?;
                Ok((ds.subset(SplitTag::Train)?, ds.subset(SplitTag::Test)?))
            }
        }
    }

    /// Valid input range for attacks: MNIST pixels are [0, 1], the toy
    /// domains are unbounded.
    pub fn clip_range(kind: &str) -> (f64, f64) {
        if kind == "mnist" {
            (0.0, 1.0)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    #[serde(default = "default_attack_kind")]
    pub kind: String,
    #[serde(default = "default_sweep_lo")]
    pub sweep_lo: f64,
    #[serde(default = "default_sweep_hi")]
    pub sweep_hi: f64,
    #[serde(default = "default_sweep_n")]
    pub sweep_n: usize,
    #[serde(default = "default_ball")]
    pub ball: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub samples: Option<usize>,
}

fn default_attack_kind() -> String {
    "fgsm".into()
}
fn default_sweep_lo() -> f64 {
    0.01
}
fn default_sweep_hi() -> f64 {
    1.0
}
fn default_sweep_n() -> usize {
    20
}
fn default_ball() -> f64 {
    0.5
}
fn default_steps() -> usize {
    10
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    /// Trains one model per beta when present (and no --beta override is
    /// given), suffixing output names.
    #[serde(default)]
    pub beta_sweep: Option<Vec<f64>>,
    /// Attack defaults consumed by `lil attack --config`.
    #[serde(default)]
    pub attack: Option<AttackSection>,
    /// Default location for training outputs when --out is omitted.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::invalid(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.train.validate()?;
        if let Some(sweep) = &self.beta_sweep {
            if sweep.is_empty() {
                return Err(Error::invalid("config: empty beta_sweep"));
            }
            if sweep.iter().any(|b| !b.is_finite() || *b < 0.0) {
                return Err(Error::invalid("config: beta_sweep values must be >= 0"));
            }
        }
        if let Some(attack) = &self.attack {
            if attack.kind != "fgsm" && attack.kind != "pgd" {
                return Err(Error::invalid(format!(
                    "config: unknown attack kind {:?}",
                    attack.kind
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_keys() {
        let text = r#"{
            "dataset": {"rings": {"n_per_ring": 10, "noise_variance": 0.0, "seed": 1}},
            "network": {"layer_widths": [3, 4], "num_classes_per_level": [2]},
            "train": {"weights": {"alpha": 1.0, "beta": 0.0}, "epochs": 1, "seed": 1},
            "mystery": 5
        }"#;
        assert!(serde_json::from_str::<ExperimentConfig>(text).is_err());
    }

    #[test]
    fn parses_minimal_config() {
        let text = r#"{
            "dataset": {"torus": {"n": 100, "big_radius": 2.0, "small_radius": 1.0,
                                   "noise_variance": 0.001, "seed": 3}},
            "network": {"layer_widths": [3, 20, 20], "num_classes_per_level": [2, 4]},
            "train": {"weights": {"alpha": 1.0, "beta": 100.0}, "epochs": 5, "seed": 9}
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.dataset.kind(), "torus");
        assert_eq!(cfg.train.epochs, 5);
        assert!(cfg.train.batch_size.is_none());
    }

    #[test]
    fn shipped_presets_parse_and_validate() {
        let presets = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets");
        for name in ["rings.json", "torus-stacked.json", "mnist-sweep.json"] {
            let cfg = ExperimentConfig::load(&presets.join(name))
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(cfg.network.validate().is_ok(), "{name}");
        }
        let mnist = ExperimentConfig::load(&presets.join("mnist-sweep.json")).unwrap();
        assert_eq!(
            mnist.beta_sweep,
            Some(vec![0.0, 0.001, 0.01, 0.1, 1.0, 10.0])
        );
        assert_eq!(mnist.network.layer_widths, vec![784, 100, 100, 100, 100]);
    }
}
