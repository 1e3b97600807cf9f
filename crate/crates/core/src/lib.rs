//! Driver-behavior classification with LIME-guided feature selection.
//!
//! The pipeline loads a tabular dataset, balances and scales it, evaluates a
//! zoo of classifiers over repeated stratified splits, explains the best one
//! with a LIME-style local surrogate, keeps the most influential features and
//! re-evaluates every classifier on the reduced table.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar for the common cases.

pub mod data;
pub mod error;
pub mod lime;
pub mod matrix;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod scalar;
pub mod seed;
pub mod selection;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use matrix::Matrix;
pub use models::{Algorithm, Classifier, ModelSpec, TrainedModel};
pub use scalar::Scalar;
pub use seed::Seed;

pub type Dataset64 = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type Model64 = TrainedModel<f64>;
pub type Model32 = TrainedModel<f32>;
