//! Desk-scale encoder-decoder over point clouds and token sequences.
//!
//! All arithmetic is generic over [`Real`]: `f32` for training and
//! inference, `f64` for gradient checks. Parameters live in one flat
//! vector described by a [`Layout`].

mod config;
mod decoder;
mod encoder;
mod gradcheck;
mod infer;
mod ops;
mod params;
mod real;
mod train;

pub use config::ModelConfig;
pub use decoder::{cross_entropy, Model};
pub use encoder::{cell_statistics, CellStats, EncoderFeatures};
pub use gradcheck::{gradient_check, gradient_check_with, GradCheckReport};
pub use infer::{decode, DecodeOutput, Strategy};
pub use ops::Mutation;
pub use params::{Init, Layout, ParamGroup, CELL_FEATURES};
pub use real::{matmul, Real};
pub use train::{
    augment_example, evaluate_loss, load_checkpoint, load_manifest, load_split, loss_csv, save_checkpoint, train,
    train_dataset, train_with_steps, Checkpoint, EpochStats, Example, TrainConfig, TrainState,
};

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("sequence of {len} tokens exceeds the maximum of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    IoFailure { path: PathBuf, source: std::io::Error },
    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss { epoch: usize, step: u64, detail: String },
    #[error("{path}: bad checkpoint: {message}")]
    BadCheckpoint { path: PathBuf, message: String },
}
