//! Forward and backward kernels for the ten layer kinds the segmentation
//! networks are built from.
//!
//! Every kernel is a pure function of its inputs: parameters come in as
//! slices, gradients and updated statistics come back as values. Batch
//! samples are processed independently through [`crate::exec`] and any
//! reduction across the batch is summed in sample order, so results do not
//! depend on the execution mode.

mod activation;
mod concat;
mod conv;
mod conv_transpose;
mod dropout;
mod init;
mod norm;
mod pool;

use serde::{Deserialize, Serialize};

pub use activation::{relu_backward, relu_forward, sigmoid, sigmoid_backward, sigmoid_forward};
pub use concat::{concat_backward, concat_channels, split_channels};
pub use conv::{conv2d_backward, conv2d_forward};
pub use conv_transpose::{conv_transpose2x_backward, conv_transpose2x_forward};
pub use dropout::{dropout_backward, dropout_forward, DropoutMask};
pub use init::he_normal;
pub use norm::{batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormOutput, BatchNormParams};
pub use pool::{maxpool2x2_backward, maxpool2x2_forward, upsample_nearest2x_backward, upsample_nearest2x_forward};

use crate::tensor::Tensor;

/// Whether a forward pass is part of a training step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv3x3,
    Conv1x1,
    ConvTranspose2x,
    Maxpool2x2,
    UpsampleNearest2x,
    Batchnorm,
    Relu,
    Sigmoid,
    Concat,
    Dropout,
}

/// Static description of one layer. Parameters live in the model's store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout_rate: Option<f64>,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, in_channels: usize, out_channels: usize) -> Self {
        LayerSpec { kind, in_channels, out_channels, dropout_rate: None }
    }

    /// Kernel edge length for convolutional kinds.
    pub fn kernel_size(&self) -> Option<usize> {
        match self.kind {
            LayerKind::Conv3x3 => Some(3),
            LayerKind::Conv1x1 => Some(1),
            LayerKind::ConvTranspose2x => Some(2),
            _ => None,
        }
    }

    /// Shape of the weight tensor, if the layer has one.
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match self.kind {
            LayerKind::Conv3x3 | LayerKind::Conv1x1 => {
                let k = self.kernel_size().unwrap();
                Some(vec![self.out_channels, self.in_channels, k, k])
            }
            LayerKind::ConvTranspose2x => Some(vec![self.in_channels, self.out_channels, 2, 2]),
            _ => None,
        }
    }

    /// Trainable parameter count.
    pub fn param_count(&self) -> usize {
        match self.kind {
            LayerKind::Conv3x3 | LayerKind::Conv1x1 | LayerKind::ConvTranspose2x => {
                self.weight_shape().unwrap().iter().product::<usize>() + self.out_channels
            }
            LayerKind::Batchnorm => 2 * self.out_channels,
            _ => 0,
        }
    }

    /// Output shape for a single input of shape `input` (for concat, `input`
    /// is the first operand and `out_channels` the merged width).
    pub fn output_shape(&self, input: [usize; 4]) -> [usize; 4] {
        let [n, _, h, w] = input;
        match self.kind {
            LayerKind::Maxpool2x2 => [n, self.out_channels, h / 2, w / 2],
            LayerKind::UpsampleNearest2x | LayerKind::ConvTranspose2x => [n, self.out_channels, h * 2, w * 2],
            _ => [n, self.out_channels, h, w],
        }
    }
}

/// Weights of a convolution-like layer.
#[derive(Debug, Clone, Copy)]
pub struct Kernel<'a, T> {
    /// `(out, in, k, k)` for convolutions, `(in, out, 2, 2)` for transposed.
    pub weight: &'a [T],
    pub bias: &'a [T],
    pub in_channels: usize,
    pub out_channels: usize,
    pub size: usize,
}

/// Gradients of a layer with weights.
#[derive(Debug, Clone)]
pub struct KernelGrads<T> {
    pub input: Tensor<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}
