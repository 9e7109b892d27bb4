//! The codec network: two analysis branches (image, projected depth), the
//! fusion transform, hyperprior, optional autoregressive context model,
//! synthesis, rate-distortion loss and training.

mod blocks;
mod config;
mod context;
mod model;
mod params;
mod quantize;
mod train;

pub use blocks::Binding;
pub use config::{lambda_index, CodecConfig, PAPER_LAMBDAS};
pub use context::{causal_mask, ContextModel, MASK_SIZE};
pub use model::{rd_loss, Codec, ForwardOutput, GaussianParams, Noise, CHECKPOINT_FILE, LEAKY_SLOPE, SIDECAR_FILE};
pub use params::{ParamSpec, ParamStore};
pub use quantize::{quantize, round_half_away, uniform_noise, QuantMode};
pub use train::{StepStats, TrainConfig, TrainState, Trainer, OPTIMIZER_FILE, STATE_FILE};

use crate::entropy::EntropyError;
use crate::tensor::{CheckpointError, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("input geometry: {0}")]
    Geometry(String),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("parameter `{0}` is missing")]
    MissingParam(String),
    #[error("parameter `{name}` has shape {actual:?}, expected {expected:?}")]
    ParamShape { name: String, expected: Vec<usize>, actual: Vec<usize> },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("sidecar: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error("non-finite loss {loss} at step {step}")]
    NonFinite { step: u64, loss: f64 },
}

pub type Result<T, E = NetError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> NetError + '_ {
    move |source| NetError::Io { path: path.display().to_string(), source }
}
