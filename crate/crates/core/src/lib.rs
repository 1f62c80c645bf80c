//! Two-stage case/control genotype analysis: quality control and per-SNP
//! logistic association scanning, followed by P-value-threshold feature
//! selection feeding a feedforward neural classifier.

pub mod assoc;
pub mod error;
pub mod genotype;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod qc;
pub mod synth;

pub use error::{Error, Result};
