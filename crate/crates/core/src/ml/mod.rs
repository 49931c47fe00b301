//! Tiny 1D convolutional regressor for the low-to-high fidelity TKE map,
//! trained from scratch with reverse-mode gradients and Adam.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod model;
pub mod train;

use thiserror::Error;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use layers::{Mode, RunningStats};
pub use loss::{mae_loss, mse_loss, LossKind};
pub use model::{param_count, Architecture, Backward, CnnModel, Layer, DEFAULT_WINDOW};
pub use train::{train, train_with_monitor, HeldOut, Samples, TrainingConfig, TrainingHistory, ValidationMonitor};

#[derive(Debug, Error)]
pub enum MlError {
    #[error("input of length {length} is shorter than kernel {kernel}")]
    InputTooShort { length: usize, kernel: usize },
    #[error("batch normalization in training mode needs at least 2 samples, got {size}")]
    DegenerateBatch { size: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("{pred} predictions but {target} targets")]
    LengthMismatch { pred: usize, target: usize },
    #[error("{0} partition is empty")]
    EmptyPartition(&'static str),
    #[error("operation requires training mode")]
    WrongMode,
    #[error("non-finite parameters")]
    NonFinite,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint format version {found:?} is not supported (expected {expected})")]
    VersionMismatch { found: Option<u64>, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MlError>;
