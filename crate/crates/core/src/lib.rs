//! Pool-based active learning for small-resolution fingerspelling corpora.
//!
//! The crate is split along the experiment pipeline:
//!
//! - [`nn`]: a small convolutional classifier with exact reverse-mode
//!   gradients, inverted dropout, Adam training and a versioned weight file.
//! - [`data`]: corpus ingestion (CSV and per-letter image directories),
//!   letter-frequency resampling and the stratified split into labeled set,
//!   unlabeled pool and test set.
//! - [`acquisition`]: uncertainty scores over MC-dropout predictive samples
//!   (variation ratio, max entropy, BALD, mean std) and batch selection.
//! - [`engine`]: the active-learning loop with optional transfer
//!   pre-training, the simulated oracle and per-class gap reports.
//!
//! Every operation is a pure function of its inputs, seeds included.

pub mod acquisition;
pub mod data;
pub mod engine;
pub mod nn;
pub mod seed;

/// Version string embedded in results and manifests.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
