//! The two segmentation architectures and their weight container.

mod archive;
mod graph;
mod zoo;

use serde::{Deserialize, Serialize};

pub use archive::{load_weight_archive, ArchiveTensor, WeightArchive};
pub use graph::{GradientTape, GraphBuilder, ModelGraph, Node, NormConfig, Param, ParamStore, Trace, ValueId};
pub use zoo::{build_baseline, build_vgg19, vgg19_encoder_layout, ModelConfig, VGG19_BLOCKS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Baseline,
    Vgg19Backbone,
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Architecture::Baseline => "baseline",
            Architecture::Vgg19Backbone => "vgg19_backbone",
        })
    }
}

impl std::str::FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Architecture::Baseline),
            "vgg19_backbone" => Ok(Architecture::Vgg19Backbone),
            other => Err(format!("unknown architecture `{other}` (expected baseline or vgg19_backbone)")),
        }
    }
}
