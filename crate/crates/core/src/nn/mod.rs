//! Small convolutional classifier with exact reverse-mode gradients.
//!
//! The network is a stack of conv blocks (same-padded convolution, ReLU,
//! 2x2 max-pool, dropout) followed by hidden dense layers (ReLU, dropout)
//! and a linear classification head feeding a softmax. All arithmetic is
//! `f64`. Dropout is inverted: kept units are scaled by `1 / (1 - p)` at
//! train time, so the deterministic forward pass needs no rescaling.

mod arch;
mod network;
mod params;
mod persist;
mod train;

use thiserror::Error;

pub use arch::{ArchSpec, ConvBlock, DenseBlock};
pub use network::{
    forward, forward_logits, loss_and_gradients, nonsmooth_margin, Gradients, LossAndGradients,
};
pub use params::{init_model, reinit_head, reinit_head_for, LayerParams, ModelParams};
pub use persist::{
    load_params, load_params_expecting, params_from_bytes, params_to_bytes, save_params,
    WEIGHT_FILE_MAGIC, WEIGHT_FILE_VERSION,
};
pub use train::{evaluate, train, Evaluation, TrainConfig, Trained};

/// Dropout behaviour of a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Dropout disabled.
    Deterministic,
    /// Dropout masks drawn from the given seed. Item `i` of the batch always
    /// receives the masks derived from `(seed, i)`.
    Stochastic(u64),
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error(
        "input shape mismatch at batch item {index}: expected {expected} values \
         ({channels} channel(s) x {resolution}x{resolution}), got {actual}"
    )]
    ShapeMismatch {
        index: usize,
        expected: usize,
        actual: usize,
        resolution: usize,
        channels: usize,
    },
    #[error("label {label} at batch item {index} is outside [0, {classes})")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("label count {labels} does not match image count {images}")]
    LabelCount { images: usize, labels: usize },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),
    #[error("parameter layout does not match architecture: {0}")]
    Layout(String),
    #[error("corrupt weight file: {0}")]
    CorruptFile(String),
    #[error("unsupported weight file version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("architecture mismatch: weight file holds [{found}], run expects [{expected}]")]
    ArchMismatch {
        expected: Box<ArchSpec>,
        found: Box<ArchSpec>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
