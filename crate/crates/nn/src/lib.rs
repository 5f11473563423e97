//! Small CNN toolkit with hand-written backward passes.
//!
//! Activations are kept channel-major (`[C, N, H, W]`) so each convolution is
//! one GEMM over a batched patch matrix. Everything is generic over
//! [`Real`]: training runs in f32, gradient checks in f64.

pub mod checkpoint;
pub mod encoder;
pub mod gradcheck;
pub mod heads;
pub mod layers;
pub mod optim;
pub mod real;
pub mod tensor;

pub use encoder::{BasicBlock, Encoder, EncoderSpec, REPRESENTATION_DIM};
pub use gradcheck::{grad_check, relative_error};
pub use heads::{softmax, softmax_backward, LinearHead, ProjectionHead, ZeroNormPolicy, NUM_CLASSES, PROJECTION_DIM};
pub use layers::{BatchNorm2d, Conv2d, Linear, Mode, Module};
pub use optim::{Adam, AdamConfig};
pub use real::Real;
pub use tensor::{Act, Param, Tensor};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("projection pre-normalization output has zero norm")]
    ZeroNorm,
    #[error("{0}")]
    State(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
