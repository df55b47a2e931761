//! In-memory columnar datastore with per-feature incremental uniform
//! sampling and exact aggregation baselines.
//!
//! A [`Dataset`] is immutable after load and shared by every request. Each
//! request opens one [`FeatureSampleState`] per aggregation feature; the state
//! walks a seeded lazy Fisher–Yates permutation of the request's partition so
//! that growing the sample only scans the new rows.

mod aggregation;
mod dataset;
mod request;
mod sampling;

pub use aggregation::{
    aggregate_values, exact_aggregate, AggregationSpec, BoundAggregation, CmpOp, Condition,
    Operand, Operator, PartitionBinding,
};
pub use dataset::{
    load_dataset, Column, ColumnData, ColumnSchema, ColumnType, Dataset, KeyValue, Manifest,
    PartitionIndex, Table, TableManifest,
};
pub use request::{RequestRecord, Scalar};
pub use sampling::{permutation_seed, FeatureSampleState, LazyPermutation, PERMUTATION_BLOCK};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("manifest {path}: {message}")]
    Manifest { path: String, message: String },

    #[error("table `{table}`: missing file {path}")]
    MissingFile { table: String, path: String },

    #[error("duplicate table name `{0}`")]
    DuplicateTable(String),

    #[error("table `{table}`, column `{column}`, row {row}: cannot parse {value:?} as {expected}")]
    Parse {
        table: String,
        column: String,
        row: usize,
        value: String,
        expected: &'static str,
    },

    #[error("table `{table}`, row {row}: {message}")]
    Csv {
        table: String,
        row: usize,
        message: String,
    },

    #[error("table `{table}`: column `{column}` missing from CSV header")]
    MissingColumn { table: String, column: String },

    #[error("table `{table}`: columns have different lengths")]
    RaggedColumns { table: String },

    #[error("unknown table `{0}`")]
    UnknownTable(String),

    #[error("table `{table}`: unknown column `{column}`")]
    UnknownColumn { table: String, column: String },

    #[error("table `{table}`: column `{column}` has type {found}, expected {expected}")]
    ColumnType {
        table: String,
        column: String,
        found: &'static str,
        expected: &'static str,
    },

    #[error("feature `{feature}`: {message}")]
    Aggregation { feature: String, message: String },

    #[error("request {request}: missing field `{field}`")]
    MissingRequestField { request: u64, field: String },
}
