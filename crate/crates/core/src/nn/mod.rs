//! Minimal differentiable substrate: parameters, layers with hand-written
//! backward passes, an adaptive-moment optimizer, checkpoints and a
//! finite-difference gradient checker.
//!
//! Activations are row-major `ndarray` matrices with one sample per row.

mod checkpoint;
mod gradcheck;
mod layers;
mod lstm;
mod optim;
mod param;

pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use layers::{
    cosine, cosine_backward, mse, relu, relu_backward, softmax, softmax_cross_entropy, Dense,
};
pub use lstm::{LstmCache, LstmCell};
pub use optim::{Optimizer, OptimizerKind};
pub use param::{Param, Parameterized};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}
