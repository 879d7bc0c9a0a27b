//! Synthetic longitudinal microbiome benchmark with glass-box models, a small
//! transformer, explanation methods, and an evaluation harness.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common instantiations.

pub mod error;
pub mod evalbench;
pub mod explain;
pub mod featurize;
pub mod format;
pub mod glassbox;
pub mod metrics;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod store;
pub mod tensor;
pub mod transformer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Transformer32 = transformer::Transformer<f32>;
pub type Transformer64 = transformer::Transformer<f64>;
pub type FeatureMatrix64 = featurize::FeatureMatrix<f64>;
pub type SparseLogistic64 = glassbox::SparseLogisticFit<f64>;
pub type DecisionTree64 = glassbox::DecisionTreeFit<f64>;
