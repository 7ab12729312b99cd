use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_baseline, build_vgg19, ArchiveTensor, Architecture, ModelConfig, ModelGraph, WeightArchive};
use crate::train::{AdamState, Moments, TrainConfig};

const FORMAT: &str = "segunet-checkpoint";

/// Model parameters and optimiser state at the end of an epoch.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelGraph,
    pub adam: AdamState,
    pub meta: CheckpointMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub architecture: Architecture,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub adam_step: u64,
    /// 1-based epoch the checkpoint was taken after; 0 before training.
    pub epoch: usize,
    pub val_dice: Option<f64>,
    /// Free-form echo of the experiment configuration.
    #[serde(default)]
    pub experiment: Option<serde_json::Value>,
}

impl Checkpoint {
    pub fn new(model: ModelGraph, adam: AdamState, train_config: TrainConfig, epoch: usize, val_dice: Option<f64>) -> Self {
        let meta = CheckpointMeta {
            format: FORMAT.into(),
            architecture: model.architecture,
            model_config: model.config,
            train_config,
            adam_step: adam.step,
            epoch,
            val_dice,
            experiment: None,
        };
        Checkpoint { model, adam, meta }
    }

    pub fn to_archive(&self) -> Result<WeightArchive> {
        let mut a = WeightArchive::new();
        for (name, p) in &self.model.params {
            a.insert(format!("param.{name}"), ArchiveTensor::new(p.shape.clone(), p.data.clone())?)?;
        }
        for (name, mo) in &self.adam.moments {
            let shape = self.model.params.get(name).map(|p| p.shape.clone()).unwrap_or_else(|| vec![mo.m.len()]);
            a.insert(format!("adam.m.{name}"), ArchiveTensor::new(shape.clone(), mo.m.clone())?)?;
            a.insert(format!("adam.v.{name}"), ArchiveTensor::new(shape, mo.v.clone())?)?;
        }
        let mut meta = self.meta.clone();
        meta.adam_step = self.adam.step;
        a.set_meta(serde_json::to_value(&meta)?);
        Ok(a)
    }

    /// Rebuilds the graph recorded in the archive and fills in every
    /// parameter and optimiser moment.
    pub fn from_archive(mut a: WeightArchive) -> Result<Self> {
        let meta_value = a.meta().cloned().ok_or_else(|| Error::CorruptArchive("checkpoint has no meta entry".into()))?;
        let meta: CheckpointMeta = serde_json::from_value(meta_value)
            .map_err(|e| Error::CorruptArchive(format!("checkpoint meta: {e}")))?;
        if meta.format != FORMAT {
            return Err(Error::CorruptArchive(format!("unexpected format `{}`", meta.format)));
        }
        let mut model = match meta.architecture {
            Architecture::Baseline => build_baseline(&meta.model_config),
            Architecture::Vgg19Backbone => build_vgg19(&meta.model_config, None)?,
        };
        let mut adam = AdamState { step: meta.adam_step, ..Default::default() };
        for (name, p) in model.params.iter_mut() {
            let t = a
                .remove(&format!("param.{name}"))
                .ok_or_else(|| Error::MissingWeight(format!("param.{name}")))?;
            if t.shape != p.shape {
                return Err(Error::WeightShapeMismatch { name: name.clone(), expected: p.shape.clone(), found: t.shape });
            }
            p.data = t.data;
            let m = a.remove(&format!("adam.m.{name}"));
            let v = a.remove(&format!("adam.v.{name}"));
            match (m, v) {
                (Some(m), Some(v)) if m.shape == p.shape && v.shape == p.shape => {
                    adam.moments.insert(name.clone(), Moments { m: m.data, v: v.data });
                }
                (None, None) => {}
                _ => return Err(Error::CorruptArchive(format!("optimiser moments for `{name}`"))),
            }
        }
        if let Some(extra) = a.names().next() {
            return Err(Error::CorruptArchive(format!("unexpected entry `{extra}`")));
        }
        Ok(Checkpoint { model, adam, meta })
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    checkpoint.to_archive()?.save(path)
}

/// Loads a checkpoint. With `expected` set, a checkpoint of a different
/// architecture is rejected with `ConfigMismatch`.
pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<Architecture>) -> Result<Checkpoint> {
    let ck = Checkpoint::from_archive(crate::model::load_weight_archive(path)?)?;
    if let Some(arch) = expected {
        if arch != ck.meta.architecture {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint architecture is {}, configuration says {arch}",
                ck.meta.architecture
            )));
        }
    }
    Ok(ck)
}
