//! Approximate serving of ML inference pipelines whose inputs include
//! expensive aggregation features.
//!
//! Each request starts from a small uniform sample per aggregation feature,
//! propagates the sampling error through the model with quasi-Monte Carlo,
//! and keeps drawing rows for the most influential features until the
//! prediction satisfies `Pr(|Y - ŷ| <= δ) >= τ` against the exact pipeline.
//!
//! Module map:
//!
//! * [`store`]: in-memory columnar dataset, incremental per-feature sampling, exact baselines.
//! * [`estimate`]: feature estimates with normal or bootstrap error distributions.
//! * [`model`]: linear, tree-ensemble, and MLP inference operators.
//! * [`qmc`]: Sobol points, inverse normal CDF, Saltelli sample matrices.
//! * [`propagate`]: inference uncertainty and the accuracy check.
//! * [`importance`]: first-order Sobol indices from cached evaluations.
//! * [`planner`]: initial plan, best direction, plan updates.
//! * [`engine`]: the per-request sampling loop and the exact baseline.
//! * [`harness`]: pipeline files, replay, synthetic workloads, line-protocol serving.

pub mod engine;
pub mod error;
pub mod estimate;
pub mod exec;
pub mod harness;
pub mod importance;
pub mod matrix;
pub mod model;
pub mod planner;
pub mod propagate;
pub mod qmc;
pub mod stats;
pub mod store;

pub use error::{Error, Result};
pub use matrix::Matrix;
