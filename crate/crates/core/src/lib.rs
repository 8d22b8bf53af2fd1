//! Learned metric-space filtering for loop-based similarity joins.
//!
//! The crate is `no_std` (with `alloc`) so the algorithmic pieces can be
//! embedded anywhere; enable the default `std` feature for a monotonic clock
//! and runtime SIMD detection in the matrix kernels.
//!
//! Pipeline, bottom-up:
//!
//! - [`dataset`] / [`synth`]: vectors, metrics, splits, synthetic mixtures.
//! - [`oracle`]: exact range search and cardinality tables (groundtruth).
//! - [`sampling`]: training-ε selection (uniform and adaptive) and
//!   interpolated targets.
//! - [`mlp`] / [`estimator`]: the cardinality regressor contract and the
//!   built-in multilayer perceptron.
//! - [`filter`], [`lsbf`]: the learned filter with its decision threshold,
//!   and the locality-sensitive Bloom filter baseline.
//! - [`lsh`], [`join`]: p-stable multi-probe LSH and the join engines.
//! - [`metrics`]: recall, confusion counts and join bookkeeping.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod clock;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod filter;
pub mod join;
pub mod lsbf;
pub mod lsh;
pub mod metrics;
pub mod mlp;
pub mod oracle;
pub mod phash;
pub mod rng;
pub mod sampling;
pub mod synth;

mod math;

pub use dataset::{convert_epsilon, distance, Dataset, Metric, SplitSpec};
pub use error::{Error, Result};
pub use estimator::{CardinalityEstimator, OracleEstimator};
pub use filter::{LearnedFilter, NegativesSource, XdtMethod, XdtSelection};
pub use join::{JoinResult, QueryFilter};
pub use mlp::{MlpModel, TargetTransform, TrainConfig, TrainingReport};
pub use oracle::{CardinalityTable, NeighborSet};
pub use sampling::{EpsilonGrid, PreparedTrainingSet, Strategy, TrainingTuple};
