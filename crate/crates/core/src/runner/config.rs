use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Ratios, DEFAULT_IMAGE_SIZE};
use crate::error::{Error, Result};
use crate::metrics::Aggregation;
use crate::model::{Architecture, ModelConfig, NormConfig};
use crate::train::{CheckpointPolicy, LossKind, TrainConfig};

/// Everything one experiment needs. Read from a flat TOML file; see
/// [`ExperimentConfig::KEYS`] for the accepted keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset_root: PathBuf,
    pub architecture: Architecture,
    pub weights_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Seeds the split, the initialisation, shuffling and dropout.
    pub seed: u64,
    pub ratios: Ratios,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub threshold: f64,
    pub aggregation: Aggregation,
    pub image_size: usize,
    pub dropout_rate: f64,
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 18] = [
        "dataset_root",
        "architecture",
        "weights_path",
        "output_dir",
        "seed",
        "train_ratio",
        "val_ratio",
        "test_ratio",
        "epochs",
        "batch_size",
        "learning_rate",
        "adam_beta1",
        "adam_beta2",
        "adam_eps",
        "threshold",
        "aggregation",
        "image_size",
        "dropout_rate",
    ];

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::InvalidConfig(vec![e.to_string()]))?;
        let mut errs = Vec::new();
        for key in table.keys() {
            if !Self::KEYS.contains(&key.as_str()) {
                errs.push(format!("{key}: unknown key"));
            }
        }
        let mut fields = Fields { table: &table, errs: &mut errs };
        let defaults = TrainConfig::default();
        let ratios_default = Ratios::default();

        let dataset_root = fields.path("dataset_root", true);
        let architecture = fields.parsed::<Architecture>("architecture", None);
        let weights_path = fields.path("weights_path", false);
        let output_dir = fields.path("output_dir", true);
        let seed = fields.int("seed", Some(42)).map(|v| v as u64);
        let ratios = Ratios {
            train: fields.float("train_ratio", ratios_default.train).unwrap_or(f64::NAN),
            val: fields.float("val_ratio", ratios_default.val).unwrap_or(f64::NAN),
            test: fields.float("test_ratio", ratios_default.test).unwrap_or(f64::NAN),
        };
        let epochs = fields.int("epochs", Some(defaults.epochs as i64));
        let batch_size = fields.int("batch_size", Some(defaults.batch_size as i64));
        let learning_rate = fields.float("learning_rate", defaults.learning_rate);
        let adam_beta1 = fields.float("adam_beta1", defaults.adam_beta1);
        let adam_beta2 = fields.float("adam_beta2", defaults.adam_beta2);
        let adam_eps = fields.float("adam_eps", defaults.adam_eps);
        let threshold = fields.float("threshold", 0.5);
        let aggregation = fields.parsed::<Aggregation>("aggregation", Some(Aggregation::Micro));
        let image_size = fields.int("image_size", Some(DEFAULT_IMAGE_SIZE as i64));
        let dropout_rate = fields.float("dropout_rate", ModelConfig::default().dropout_rate);

        match (architecture, &weights_path) {
            (Some(Architecture::Vgg19Backbone), None) => {
                errs.push("weights_path: required when architecture = \"vgg19_backbone\"".into())
            }
            (Some(Architecture::Baseline), Some(_)) => {
                errs.push("weights_path: not allowed when architecture = \"baseline\"".into())
            }
            _ => {}
        }
        if ratios.validate().is_err() && ratios.train.is_finite() && ratios.val.is_finite() && ratios.test.is_finite() {
            errs.push(format!(
                "train_ratio/val_ratio/test_ratio: must be non-negative and sum to 1, got {} + {} + {}",
                ratios.train, ratios.val, ratios.test
            ));
        }
        if let Some(t) = threshold {
            if !(t > 0.0 && t < 1.0) {
                errs.push(format!("threshold: must be in (0, 1), got {t}"));
            }
        }
        if let Some(r) = dropout_rate {
            if !(0.0..1.0).contains(&r) {
                errs.push(format!("dropout_rate: must be in [0, 1), got {r}"));
            }
        }
        if let Some(s) = image_size {
            if s <= 0 || s % 16 != 0 {
                errs.push(format!("image_size: must be a positive multiple of 16, got {s}"));
            }
        }
        for (key, v) in [("epochs", epochs), ("batch_size", batch_size)] {
            if let Some(v) = v {
                if v < 1 {
                    errs.push(format!("{key}: must be at least 1, got {v}"));
                }
            }
        }
        if let Some(lr) = learning_rate {
            if lr <= 0.0 {
                errs.push(format!("learning_rate: must be positive, got {lr}"));
            }
        }
        for (key, v) in [("adam_beta1", adam_beta1), ("adam_beta2", adam_beta2)] {
            if let Some(v) = v {
                if !(0.0..1.0).contains(&v) {
                    errs.push(format!("{key}: must be in [0, 1), got {v}"));
                }
            }
        }
        if let Some(e) = adam_eps {
            if e <= 0.0 {
                errs.push(format!("adam_eps: must be positive, got {e}"));
            }
        }
        if !errs.is_empty() {
            return Err(Error::InvalidConfig(errs));
        }
        Ok(ExperimentConfig {
            dataset_root: dataset_root.expect("validated"),
            architecture: architecture.expect("validated"),
            weights_path,
            output_dir: output_dir.expect("validated"),
            seed: seed.expect("validated"),
            ratios,
            epochs: epochs.expect("validated") as usize,
            batch_size: batch_size.expect("validated") as usize,
            learning_rate: learning_rate.expect("validated"),
            adam_beta1: adam_beta1.expect("validated"),
            adam_beta2: adam_beta2.expect("validated"),
            adam_eps: adam_eps.expect("validated"),
            threshold: threshold.expect("validated"),
            aggregation: aggregation.expect("validated"),
            image_size: image_size.expect("validated") as usize,
            dropout_rate: dropout_rate.expect("validated"),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml_str(&text)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            seed: self.seed,
            loss: LossKind::Bce,
            checkpoint_policy: CheckpointPolicy::BestValDice,
            keep_partial_batch: true,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig { init_seed: self.seed, dropout_rate: self.dropout_rate, norm: NormConfig::default() }
    }
}

struct Fields<'a> {
    table: &'a toml::Table,
    errs: &'a mut Vec<String>,
}

impl Fields<'_> {
    fn path(&mut self, key: &str, required: bool) -> Option<PathBuf> {
        match self.table.get(key) {
            Some(toml::Value::String(s)) if !s.is_empty() => Some(PathBuf::from(s)),
            Some(_) => {
                self.errs.push(format!("{key}: expected a non-empty string path"));
                None
            }
            None => {
                if required {
                    self.errs.push(format!("{key}: missing"));
                }
                None
            }
        }
    }

    fn parsed<T: std::str::FromStr<Err = String>>(&mut self, key: &str, default: Option<T>) -> Option<T> {
        match self.table.get(key) {
            Some(toml::Value::String(s)) => match s.parse() {
                Ok(v) => Some(v),
                Err(e) => {
                    self.errs.push(format!("{key}: {e}"));
                    None
                }
            },
            Some(_) => {
                self.errs.push(format!("{key}: expected a string"));
                None
            }
            None => {
                if default.is_none() {
                    self.errs.push(format!("{key}: missing"));
                }
                default
            }
        }
    }

    fn int(&mut self, key: &str, default: Option<i64>) -> Option<i64> {
        match self.table.get(key) {
            Some(toml::Value::Integer(v)) => Some(*v),
            Some(_) => {
                self.errs.push(format!("{key}: expected an integer"));
                None
            }
            None => default,
        }
    }

    fn float(&mut self, key: &str, default: f64) -> Option<f64> {
        match self.table.get(key) {
            Some(toml::Value::Float(v)) if v.is_finite() => Some(*v),
            Some(toml::Value::Integer(v)) => Some(*v as f64),
            Some(_) => {
                self.errs.push(format!("{key}: expected a finite number"));
                None
            }
            None => Some(default),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "dataset_root = \"data\"\narchitecture = \"baseline\"\noutput_dir = \"out\"\n";

    #[test]
    fn defaults_follow_the_training_recipe() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.epochs, 200);
        assert_eq!(c.batch_size, 4);
        assert_eq!(c.learning_rate, 1e-4);
        assert_eq!(c.ratios, Ratios { train: 0.7, val: 0.1, test: 0.2 });
        assert_eq!(c.image_size, 256);
        assert_eq!(c.threshold, 0.5);
        assert_eq!(c.aggregation, Aggregation::Micro);
    }

    #[test]
    fn vgg19_requires_weights() {
        let text = MINIMAL.replace("baseline", "vgg19_backbone");
        match ExperimentConfig::from_toml_str(&text) {
            Err(Error::InvalidConfig(errs)) => {
                assert_eq!(errs.len(), 1);
                assert!(errs[0].starts_with("weights_path"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn baseline_forbids_weights() {
        let text = format!("{MINIMAL}weights_path = \"w.bin\"\n");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::InvalidConfig(e)) if e[0].starts_with("weights_path")));
    }

    #[test]
    fn every_problem_is_reported() {
        let text = "architecture = \"resnet\"\nepochs = 0\nthreshold = 1.5\nbogus = 1\nlearning_rate = \"fast\"\n";
        match ExperimentConfig::from_toml_str(text) {
            Err(Error::InvalidConfig(errs)) => {
                for key in ["bogus", "dataset_root", "architecture", "output_dir", "learning_rate", "threshold", "epochs"] {
                    assert!(errs.iter().any(|e| e.starts_with(key)), "{key} not reported in {errs:?}");
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_ratios() {
        let text = format!("{MINIMAL}train_ratio = 0.5\n");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::InvalidConfig(e)) if e[0].contains("ratio")));
    }
}
