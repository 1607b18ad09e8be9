//! Differentiable-computation core: layers with hand-derived backward
//! passes, the two network architectures, losses, Adam, checkpoints, and a
//! finite-difference harness that keeps the gradients honest.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod losses;
pub mod model;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{
    load_pattern, load_verification, save_pattern, save_verification, CheckpointError,
};
pub use losses::{LossConfig, LossError};
pub use model::{PatternModel, PatternNetConfig, VerificationConfig, VerificationModel};
pub use tensor::Tensor;
