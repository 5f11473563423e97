//! Three-stage supervised contrastive training.
//!
//! 1. an RP encoder with the supervised contrastive loss;
//! 2. a ratio-image encoder with the same loss plus a consultation term that
//!    matches static-vs-static ratio distances to the stage-1 encoder's
//!    static-vs-dynamic distances;
//! 3. two linear heads over the frozen encoders, fused by a hard switch
//!    ([`s3fec`]) and trained by cross entropy.

pub mod augment;
pub mod batching;
pub mod config;
pub mod dataset;
pub mod losses;
pub mod model;
pub mod s3fec;
pub mod trainer;

pub use augment::{augment, AugmentConfig};
pub use batching::stratified_batches;
pub use config::{EncoderArch, StageEpochs, TrainConfig};
pub use dataset::{Dataset, Sample};
pub use losses::{consultation_loss, cross_entropy, stage2_loss, supcon_loss, LossConfig, LossOutput, Reduction};
pub use model::{Branch, Heads, PresenceModel, Representations};
pub use s3fec::{argmax, s3fec_backward, s3fec_forward, ClassProbabilities};
pub use trainer::{train_heads, train_probe, train_stage1, train_stage2, train_stage3, write_loss_csv, LossRow};

use presence_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("case {case} has {count} samples, need at least {needed}")]
    MissingClass { case: u8, count: usize, needed: usize },
    #[error("checkpoint {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;
