//! Builders for the baseline network and the VGG19-backbone network.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Architecture, GraphBuilder, ModelGraph, NormConfig, ValueId, WeightArchive};

/// Construction-time settings shared by both architectures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Seed for He-normal initialisation.
    pub init_seed: u64,
    /// Dropout after each decoder block of the VGG19 variant.
    pub dropout_rate: f64,
    pub norm: NormConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { init_seed: 42, dropout_rate: 0.3, norm: NormConfig::default() }
    }
}

fn conv_bn_relu<R: rand::Rng + ?Sized>(b: &mut GraphBuilder<'_, R>, name: &str, src: ValueId, out: usize) -> ValueId {
    let c = b.conv3x3(&format!("{name}_conv"), src, out);
    let n = b.batchnorm(&format!("{name}_bn"), c);
    b.relu(&format!("{name}_relu"), n)
}

/// Baseline encoder-decoder: two 64- and two 128-filter conv blocks with
/// max pooling, a 256-filter bottleneck, nearest-neighbour upsampling with
/// skip concatenation, and a 1x1 sigmoid head.
pub fn build_baseline(config: &ModelConfig) -> ModelGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    let mut b = GraphBuilder::new(3, &mut rng);

    let x = conv_bn_relu(&mut b, "enc1_1", GraphBuilder::<ChaCha8Rng>::INPUT, 64);
    let s1 = conv_bn_relu(&mut b, "enc1_2", x, 64);
    b.tap("s1", s1);
    let p1 = b.maxpool("pool1", s1);

    let x = conv_bn_relu(&mut b, "enc2_1", p1, 128);
    let s2 = conv_bn_relu(&mut b, "enc2_2", x, 128);
    b.tap("s2", s2);
    let p2 = b.maxpool("pool2", s2);

    let x = conv_bn_relu(&mut b, "bottleneck_1", p2, 256);
    let bott = conv_bn_relu(&mut b, "bottleneck_2", x, 256);
    b.tap("bottleneck", bott);

    let u = b.upsample("up1", bott);
    let m = b.concat("merge1", u, s2);
    let d1 = conv_bn_relu(&mut b, "dec1", m, 128);

    let u = b.upsample("up2", d1);
    let m = b.concat("merge2", u, s1);
    let d2 = conv_bn_relu(&mut b, "dec2", m, 64);

    let logits = b.conv1x1("head", d2, 1);
    b.sigmoid("head_sigmoid", logits);
    b.finish(Architecture::Baseline, *config)
}

/// VGG19 convolutional blocks as (block, convs, width).
pub const VGG19_BLOCKS: [(usize, usize, usize); 5] = [(1, 2, 64), (2, 2, 128), (3, 4, 256), (4, 4, 512), (5, 4, 512)];

/// Archive names and shapes of the 16 VGG19 convolutions, in network order.
pub fn vgg19_encoder_layout() -> Vec<(String, Vec<usize>, usize)> {
    let mut out = Vec::new();
    let mut cin = 3;
    for (block, convs, width) in VGG19_BLOCKS {
        for i in 1..=convs {
            out.push((format!("block{block}_conv{i}"), vec![width, cin, 3, 3], width));
            cin = width;
        }
    }
    out
}

/// Builds the VGG19-backbone network. With `weights`, encoder convolutions
/// are loaded from the archive (every parameter stays trainable); without,
/// they are He-initialised like the rest.
pub fn build_vgg19(config: &ModelConfig, weights: Option<&WeightArchive>) -> Result<ModelGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    let mut b = GraphBuilder::new(3, &mut rng);

    let mut x = GraphBuilder::<ChaCha8Rng>::INPUT;
    let mut skips = Vec::new();
    for (block, convs, width) in VGG19_BLOCKS {
        for i in 1..=convs {
            let name = format!("block{block}_conv{i}");
            x = b.conv3x3(&name, x, width);
            x = b.relu(&format!("{name}_relu"), x);
        }
        if block < 5 {
            b.tap(&format!("s{block}"), x);
            skips.push(x);
            x = b.maxpool(&format!("block{block}_pool"), x);
        } else {
            b.tap("bottleneck", x);
        }
    }

    for (stage, width) in [512usize, 256, 128, 64].into_iter().enumerate() {
        let skip = skips[3 - stage];
        let name = format!("dec{}", stage + 1);
        let up = b.conv_transpose2x(&format!("{name}_up"), x, width);
        let m = b.concat(&format!("{name}_merge"), up, skip);
        let y = conv_bn_relu(&mut b, &name, m, width);
        x = b.dropout(&format!("{name}_dropout"), y, config.dropout_rate);
    }
    let logits = b.conv1x1("head", x, 1);
    b.sigmoid("head_sigmoid", logits);
    let mut graph = b.finish(Architecture::Vgg19Backbone, *config);

    if let Some(archive) = weights {
        for (name, shape, width) in vgg19_encoder_layout() {
            let w = archive.expect(&format!("{name}.weight"), &shape)?;
            let bias = archive.expect(&format!("{name}.bias"), &[width])?;
            graph.params.get_mut(&format!("{name}.weight")).expect("built above").data = w.data.clone();
            graph.params.get_mut(&format!("{name}.bias")).expect("built above").data = bias.data.clone();
        }
    }
    Ok(graph)
}
