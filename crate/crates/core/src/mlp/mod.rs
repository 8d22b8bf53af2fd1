//! Multilayer-perceptron cardinality estimator.

mod model;
pub mod network;

pub use model::{evaluate, fit, MlpModel, Standardizer, TargetTransform, TrainConfig, TrainingReport};
