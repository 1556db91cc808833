//! Differentially private training with selective updates.
//!
//! * [`accountant`]: Rényi-DP accounting for subsampled Gaussian releases.
//! * [`mechanisms`]: the noisy validation test, selective release and the
//!   truncated-Gaussian divergence.
//! * [`models`]: linear, logistic and one-hidden-layer models with exact
//!   per-sample gradients, clipping and momentum SGD.
//! * [`engine`]: the DPSUR and DPSGD training loops.
//! * [`harness`]: configuration, datasets, experiment runs and verification.
//!
//! Model code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! accountant and the mechanism calculus are `f64` only.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod engine;
pub mod error;
pub mod harness;
pub mod mechanisms;
pub mod models;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ModelParamsF64 = models::ModelParams<f64>;
pub type ModelParamsF32 = models::ModelParams<f32>;
pub type ExampleF64 = models::Example<f64>;
pub type ExampleF32 = models::Example<f32>;
pub type DatasetF64 = harness::Dataset<f64>;
pub type DatasetF32 = harness::Dataset<f32>;
pub type TrainerF64<'a> = engine::Trainer<'a, f64>;
pub type TrainerF32<'a> = engine::Trainer<'a, f32>;
