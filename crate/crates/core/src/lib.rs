//! Brain-encoding models built on ensembles of task-specific sentence
//! embeddings.
//!
//! Each (subject, ROI) gets ridge-regression encoders that map stimulus
//! features to voxel responses. Per-task feature spaces can be combined by
//! averaging, power-weighted averaging, learned simplex weights, or stacking
//! (per-task PCA or averaging followed by a ridge meta-learner). Predictions
//! are scored with 2v2 accuracy and sample-wise Pearson correlation.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory; the
//! `brain-ensemble` binary drives whole experiments from a manifest and a
//! plan file.

pub mod cli;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod npy;
pub mod pca;
pub mod pipeline;
pub mod regression;
pub mod synthetic;

pub use error::{Error, Result};
