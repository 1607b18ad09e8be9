//! Two-stage IMU authentication pipeline: ingest raw inertial recordings,
//! cut and regrid unlock windows, derive multi-channel feature tensors, and
//! train/evaluate the verification models.

pub mod eval;
pub mod features;
pub mod ingest;
pub mod nn;
pub mod num;
pub mod pipeline;
pub mod preprocess;
pub mod types;

/// Scalar type used for signal preprocessing and feature derivation.
pub type SigF = f64;
/// Scalar type used for model parameters and training.
pub type NetF = f32;
