//! Pixelwise binary segmentation of panoramic dental radiographs with two
//! encoder-decoder networks: a compact baseline and a variant whose encoder
//! is the VGG19 convolutional stack.
//!
//! The crate covers the whole experiment: dataset pairing, preprocessing and
//! splitting ([`data`]), the layer kernels ([`nn`]), the two architectures and
//! their weight container ([`model`]), training ([`train`]), evaluation
//! ([`metrics`]) and the command implementations behind the `segunet` binary
//! ([`runner`]).

pub mod data;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod runner;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Element, Tensor};
