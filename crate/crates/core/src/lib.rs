//! Road-surface grading engine: tensors, layers with hand-derived
//! gradients, optimizers, classical baselines, data pipeline, training
//! protocols and checkpoints.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision for common use.

pub mod checkpoint;
pub mod classical;
pub mod data;
pub mod error;
pub mod functions;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod optim;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use model::{Classifier, InputRepr, ModelKind};
pub use rng::Rng;
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;
pub use training::{TrainConfig, TrainOutcome};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Sequential32 = layers::Sequential<f32>;
pub type Sequential64 = layers::Sequential<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type Dataset64 = data::Dataset<f64>;
pub type Classifier32 = model::Classifier<f32>;
pub type Classifier64 = model::Classifier<f64>;
