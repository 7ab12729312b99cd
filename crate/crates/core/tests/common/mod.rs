//! Oracles shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod gradcheck;
pub mod metric_oracle;
pub mod vgg_oracle;
