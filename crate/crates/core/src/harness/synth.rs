//! Synthetic workloads: a partitioned events table, aggregation features
//! over it, a model on the standardized exact features, a request log, and
//! a holdout set for δ = MAE.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::requests::write_requests;
use super::spec::{DeltaPolicy, LoadedPipeline, PipelineSpec};
use crate::engine::Pipeline;
use crate::model::{Combine, Dense, Linear, Mlp, ModelArtifact, ModelBody, Node, Task, Transform, Tree, TreeEnsemble};
use crate::store::{
    exact_aggregate, AggregationSpec, CmpOp, Column, ColumnData, ColumnSchema, Condition, Dataset,
    Manifest, Operand, Operator, PartitionBinding, RequestRecord, Scalar, Table, TableManifest,
};
use crate::{Error, Result};

pub const TABLE: &str = "events";
pub const KEY: &str = "user_id";
/// Features cycle through these operators.
pub const OPERATOR_CYCLE: [Operator; 7] = [
    Operator::Avg,
    Operator::Sum,
    Operator::Count,
    Operator::Std,
    Operator::Median,
    Operator::Var,
    Operator::Quantile(0.9),
];
const COUNT_THRESHOLD: f64 = 5.0;
const MAX_ROWS: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gbdt,
    Forest,
    Linear,
    Mlp,
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gbdt" => Ok(ModelKind::Gbdt),
            "forest" | "rf" => Ok(ModelKind::Forest),
            "linear" => Ok(ModelKind::Linear),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(format!("unknown model kind `{other}` (gbdt, forest, linear, mlp)")),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Gbdt => "gbdt",
            ModelKind::Forest => "forest",
            ModelKind::Linear => "linear",
            ModelKind::Mlp => "mlp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Aggregation features k.
    pub features: usize,
    /// Rows per partition, i.e. N for every feature.
    pub rows_per_group: usize,
    /// Distinct partition keys.
    pub groups: usize,
    pub requests: usize,
    pub model: ModelKind,
    pub task: Task,
    pub classes: usize,
    /// Amplitude of the model's response to its inputs; 0 gives a constant model.
    pub resilience: f64,
    /// Standard deviation of holdout label noise, in model output units.
    pub noise: f64,
    /// Holdout labels drawn per partition.
    pub holdout_per_group: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            features: 3,
            rows_per_group: 10_000,
            groups: 20,
            requests: 100,
            model: ModelKind::Gbdt,
            task: Task::Regression,
            classes: 2,
            resilience: 1.0,
            noise: 0.1,
            holdout_per_group: 25,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.features == 0 || 2 * self.features > crate::qmc::MAX_DIMENSION {
            return bad(format!("feature count {} outside 1..={}", self.features, crate::qmc::MAX_DIMENSION / 2));
        }
        if self.rows_per_group < 2 || self.groups == 0 || self.requests == 0 {
            return bad("rows per group must be at least 2; groups and requests at least 1".into());
        }
        if self.rows_per_group.saturating_mul(self.groups) > MAX_ROWS {
            return bad(format!("{} x {} rows exceeds the {MAX_ROWS}-row cap", self.groups, self.rows_per_group));
        }
        if !(self.resilience >= 0.0 && self.resilience.is_finite()) || !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("resilience and noise must be finite and non-negative".into());
        }
        match (self.task, self.model) {
            (Task::Classification, ModelKind::Linear) if self.classes != 2 => {
                bad("linear classifiers are binary; use --classes 2".into())
            }
            (Task::Classification, _) if self.classes < 2 => bad("classification needs at least 2 classes".into()),
            (Task::Regression, ModelKind::Linear) if self.groups <= self.features => bad(format!(
                "least-squares fit needs more partitions ({}) than features ({})",
                self.groups, self.features
            )),
            (Task::Regression, _) if self.holdout_per_group == 0 => bad("regression needs a holdout set".into()),
            _ => Ok(()),
        }
    }
}

/// A generated workload held in memory.
#[derive(Debug, Clone)]
pub struct SynthWorkload {
    pub config: SynthConfig,
    pub dataset: Arc<Dataset>,
    pub features: Vec<AggregationSpec>,
    pub model: ModelArtifact,
    pub requests: Vec<RequestRecord>,
    /// Exact feature vectors with labels.
    pub holdout: Vec<(Vec<f64>, f64)>,
    /// Mean absolute error on the holdout; the default δ. 0 for classification.
    pub delta: f64,
    /// Linear weights and bias that generated the labels, in standardized
    /// feature space; present for linear regression workloads.
    pub generating: Option<Linear>,
}

impl SynthWorkload {
    pub fn pipeline(&self) -> Result<Pipeline> {
        Pipeline::new(
            format!("synth-{}", self.config.model),
            Arc::clone(&self.dataset),
            self.features.clone(),
            Vec::new(),
            self.model.clone(),
        )
    }

    pub fn loaded(&self) -> Result<LoadedPipeline> {
        Ok(LoadedPipeline {
            spec: self.spec(),
            pipeline: self.pipeline()?,
            delta: self.delta,
        })
    }

    /// Spec as written to disk, with paths relative to the output directory.
    pub fn spec(&self) -> PipelineSpec {
        PipelineSpec {
            name: format!("synth-{}", self.config.model),
            dataset: PathBuf::from("data"),
            features: self.features.clone(),
            passthrough: Vec::new(),
            transforms: Vec::new(),
            model: PathBuf::from("model.json"),
            task: self.config.task,
            delta: match self.config.task {
                Task::Regression => DeltaPolicy::Holdout("mae:holdout.csv".into()),
                Task::Classification => DeltaPolicy::Literal(0.0),
            },
        }
    }

    /// Exact feature values for partition `group`.
    pub fn exact_features(&self, group: i64) -> Result<Vec<f64>> {
        let request = RequestRecord::new(0).with(KEY, Scalar::Num(group as f64));
        self.features
            .iter()
            .map(|f| exact_aggregate(&self.dataset, f, &request).map_err(Error::from))
            .collect()
    }
}

struct GroupShape {
    loc: f64,
    scale: f64,
}

/// Generates a workload entirely from `config.seed`.
pub fn synthesize(config: &SynthConfig) -> Result<SynthWorkload> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = config.features;
    let shapes: Vec<Vec<GroupShape>> = (0..config.groups)
        .map(|_| {
            (0..k)
                .map(|_| GroupShape {
                    loc: rng.random_range(0.0..10.0),
                    scale: rng.random_range(0.5..2.0),
                })
                .collect()
        })
        .collect();

    let total = config.groups * config.rows_per_group;
    let mut keys = Vec::with_capacity(total);
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(total); k];
    for (g, shape) in shapes.iter().enumerate() {
        for _ in 0..config.rows_per_group {
            keys.push(g as i64);
            for (j, s) in shape.iter().enumerate() {
                let e: f64 = StandardNormal.sample(&mut rng);
                let v = match j % 3 {
                    0 => s.loc + s.scale * e,
                    1 => s.loc + s.scale * (0.5 * e).exp(),
                    _ => s.loc + s.scale * 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
                };
                values[j].push(v);
            }
        }
    }
    let mut columns = vec![Column::new(KEY, ColumnData::Int64(keys))];
    for (j, v) in values.into_iter().enumerate() {
        columns.push(Column::new(format!("v{j}"), ColumnData::Float64(v)));
    }
    let dataset = Arc::new(Dataset::new(vec![Table::new(TABLE, columns, Some(KEY))?])?);
    let features: Vec<AggregationSpec> = (0..k).map(feature_spec).collect();

    let mut workload = SynthWorkload {
        config: *config,
        dataset,
        features,
        model: placeholder_model(k)?,
        requests: Vec::new(),
        holdout: Vec::new(),
        delta: 0.0,
        generating: None,
    };
    let exact: Vec<Vec<f64>> = (0..config.groups as i64)
        .map(|g| workload.exact_features(g))
        .collect::<Result<_>>()?;
    let scaler = fit_scaler(&exact, k);
    let standardized: Vec<Vec<f64>> = exact.iter().map(|x| scaler.apply(x.clone())).collect();

    let (body, generating) = build_body(config, &standardized, &mut rng)?;
    let model = ModelArtifact::new(config.task, k, vec![scaler], body)?;

    let mut holdout = Vec::new();
    if config.task == Task::Regression {
        for (x, z) in exact.iter().zip(&standardized) {
            let clean = match &generating {
                Some(g) => g.weights.iter().zip(z).map(|(w, v)| w * v).sum::<f64>() + g.bias,
                None => model.evaluate(x)?,
            };
            for _ in 0..config.holdout_per_group {
                let e: f64 = StandardNormal.sample(&mut rng);
                holdout.push((x.to_vec(), clean + config.noise * e));
            }
        }
    }
    let delta = if holdout.is_empty() {
        0.0
    } else {
        let mut total = 0.0;
        for (x, label) in &holdout {
            total += (model.evaluate(x)? - label).abs();
        }
        total / holdout.len() as f64
    };
    let requests = (0..config.requests as u64)
        .map(|id| {
            let g = rng.random_range(0..config.groups) as f64;
            RequestRecord::new(id).with(KEY, Scalar::Num(g))
        })
        .collect();

    workload.model = model;
    workload.holdout = holdout;
    workload.delta = delta;
    workload.requests = requests;
    workload.generating = generating;
    Ok(workload)
}

fn feature_spec(j: usize) -> AggregationSpec {
    let op = OPERATOR_CYCLE[j % OPERATOR_CYCLE.len()];
    let column = format!("v{j}");
    let predicate = if op == Operator::Count {
        vec![Condition {
            column: column.clone(),
            op: CmpOp::Gt,
            operand: Operand::Value {
                value: Scalar::Num(COUNT_THRESHOLD),
            },
        }]
    } else {
        Vec::new()
    };
    AggregationSpec {
        feature_id: format!("f{j}_{}", op.name().to_lowercase()),
        table: TABLE.into(),
        column: Some(column),
        op,
        predicate,
        partition: Some(PartitionBinding { field: KEY.into() }),
    }
}

fn placeholder_model(k: usize) -> Result<ModelArtifact> {
    Ok(ModelArtifact::new(
        Task::Regression,
        k,
        Vec::new(),
        ModelBody::Linear(Linear {
            weights: vec![0.0; k],
            bias: 0.0,
        }),
    )?)
}

fn fit_scaler(exact: &[Vec<f64>], k: usize) -> Transform {
    let g = exact.len() as f64;
    let mean: Vec<f64> = (0..k).map(|j| exact.iter().map(|x| x[j]).sum::<f64>() / g).collect();
    let scale = (0..k)
        .map(|j| {
            let var = exact.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / g;
            if var.sqrt() > 1e-9 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    Transform::StandardScaler { mean, scale }
}

fn build_body(config: &SynthConfig, standardized: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Result<(ModelBody, Option<Linear>)> {
    let k = config.features;
    let amp = config.resilience;
    let outputs = match config.task {
        Task::Regression => 1,
        Task::Classification => config.classes,
    };
    let body = match config.model {
        ModelKind::Gbdt => {
            let trees = 40;
            let per_tree = amp * 2.0 / (trees as f64).sqrt();
            ModelBody::TreeEnsemble(TreeEnsemble {
                outputs,
                combine: Combine::Sum,
                base_score: 0.0,
                trees: (0..trees).map(|_| random_tree(rng, k, 3, outputs, per_tree)).collect(),
            })
        }
        ModelKind::Forest => ModelBody::TreeEnsemble(TreeEnsemble {
            outputs,
            combine: Combine::Average,
            base_score: 0.0,
            trees: (0..30).map(|_| random_tree(rng, k, 4, outputs, amp * 2.0)).collect(),
        }),
        ModelKind::Mlp => {
            let hidden = 16;
            let n01 = Normal::new(0.0, 1.0).expect("unit normal");
            let mut layer = |inputs: usize, outs: usize, gain: f64| Dense {
                weights: (0..outs)
                    .map(|_| (0..inputs).map(|_| gain * n01.sample(rng) / (inputs as f64).sqrt()).collect())
                    .collect(),
                bias: (0..outs).map(|_| 0.1 * n01.sample(rng)).collect(),
            };
            let first = layer(k, hidden, 1.0);
            let second = layer(hidden, outputs, amp * 2.0);
            ModelBody::Mlp(Mlp {
                layers: vec![first, second],
            })
        }
        ModelKind::Linear => {
            let truth = Linear {
                weights: (0..k)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(rng);
                        amp * e / (k as f64).sqrt()
                    })
                    .collect(),
                bias: rng.random_range(-1.0..1.0),
            };
            if config.task == Task::Classification {
                return Ok((ModelBody::Linear(truth.clone()), Some(truth)));
            }
            let labels: Vec<f64> = standardized
                .iter()
                .map(|z| {
                    let e: f64 = StandardNormal.sample(rng);
                    truth.weights.iter().zip(z).map(|(w, v)| w * v).sum::<f64>() + truth.bias + config.noise * e
                })
                .collect();
            let fitted = least_squares(standardized, &labels)?;
            return Ok((ModelBody::Linear(fitted), Some(truth)));
        }
    };
    Ok((body, None))
}

/// Ordinary least squares with an intercept, solved by SVD.
pub fn least_squares(x: &[Vec<f64>], y: &[f64]) -> Result<Linear> {
    let rows = x.len();
    let cols = x.first().map_or(0, Vec::len);
    if rows <= cols || y.len() != rows {
        return Err(Error::Config(format!("least squares needs more than {cols} rows, got {rows}")));
    }
    let design = DMatrix::from_fn(rows, cols + 1, |i, j| if j < cols { x[i][j] } else { 1.0 });
    let target = DVector::from_column_slice(y);
    let solution = design
        .svd(true, true)
        .solve(&target, 1e-12)
        .map_err(|e| Error::Config(format!("least squares failed: {e}")))?;
    Ok(Linear {
        weights: solution.iter().take(cols).copied().collect(),
        bias: solution[cols],
    })
}

/// A complete binary tree with random splits on standardized inputs.
fn random_tree(rng: &mut ChaCha8Rng, k: usize, depth: usize, outputs: usize, amp: f64) -> Tree {
    let internal = (1 << depth) - 1;
    let mut nodes = Vec::with_capacity(2 * internal + 1);
    for i in 0..internal {
        let threshold: f64 = StandardNormal.sample(rng);
        nodes.push(Node::Split {
            feature: rng.random_range(0..k),
            threshold: 0.8 * threshold,
            left: 2 * i + 1,
            right: 2 * i + 2,
        });
    }
    for _ in 0..=internal {
        nodes.push(Node::Leaf {
            leaf: (0..outputs).map(|_| amp * rng.random_range(-1.0..1.0)).collect(),
        });
    }
    Tree { nodes }
}

/// The two-valued MEDIAN workload: one partition of `rows` values, `x` and
/// `x + 100`, with `#(x + 100) / #x ≈ imbalance`, behind an identity model
/// with noiseless labels (δ = 0).
pub fn adversarial_median(rows: usize, imbalance: f64, requests: usize, seed: u64) -> Result<SynthWorkload> {
    if rows < 3 || !(imbalance > 0.0 && imbalance <= 1.0) {
        return Err(Error::Config("adversarial median needs rows >= 3 and imbalance in (0, 1]".into()));
    }
    let base = 100.0;
    let low = ((rows as f64) / (1.0 + imbalance)).ceil() as usize;
    let low = low.clamp(1, rows - 1);
    let mut values: Vec<f64> = (0..rows).map(|i| if i < low { base } else { base + 100.0 }).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    values.shuffle(&mut rng);
    let table = Table::new(
        TABLE,
        vec![
            Column::new(KEY, ColumnData::Int64(vec![0; rows])),
            Column::new("v0", ColumnData::Float64(values)),
        ],
        Some(KEY),
    )?;
    let spec = AggregationSpec {
        feature_id: "f0_median".into(),
        table: TABLE.into(),
        column: Some("v0".into()),
        op: Operator::Median,
        predicate: Vec::new(),
        partition: Some(PartitionBinding { field: KEY.into() }),
    };
    let identity = Linear {
        weights: vec![1.0],
        bias: 0.0,
    };
    let model = ModelArtifact::new(Task::Regression, 1, Vec::new(), ModelBody::Linear(identity.clone()))?;
    let mut workload = SynthWorkload {
        config: SynthConfig {
            features: 1,
            rows_per_group: rows,
            groups: 1,
            requests,
            model: ModelKind::Linear,
            task: Task::Regression,
            classes: 2,
            resilience: 1.0,
            noise: 0.0,
            holdout_per_group: 1,
            seed,
        },
        dataset: Arc::new(Dataset::new(vec![table])?),
        features: vec![spec],
        model,
        requests: (0..requests as u64)
            .map(|id| RequestRecord::new(id).with(KEY, Scalar::Num(0.0)))
            .collect(),
        holdout: Vec::new(),
        delta: 0.0,
        generating: Some(identity),
    };
    let exact = workload.exact_features(0)?;
    let label = exact[0];
    workload.holdout = vec![(exact, label)];
    Ok(workload)
}

/// Files written by [`write_workload`] with their SHA-256 digests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub generator: String,
    pub config_json: String,
    pub files: BTreeMap<String, String>,
}

pub const SYNTH_MANIFEST: &str = "synth_manifest.json";

/// Writes the dataset, model, pipeline spec, requests, and holdout under
/// `dir`, plus a manifest pinning every file by digest.
pub fn write_workload(workload: &SynthWorkload, dir: impl AsRef<Path>) -> Result<SynthManifest> {
    let dir = dir.as_ref();
    let data_dir = dir.join("data");
    fs::create_dir_all(&data_dir).map_err(|e| Error::io(&data_dir, e))?;

    let table = workload.dataset.table(TABLE)?;
    let mut schemas = Vec::new();
    let mut writer = csv::Writer::from_path(data_dir.join("events.csv"))
        .map_err(|e| Error::Pipeline(format!("events.csv: {e}")))?;
    writer
        .write_record(table.columns().iter().map(|c| c.name.as_str()))
        .map_err(|e| Error::Pipeline(format!("events.csv: {e}")))?;
    for c in table.columns() {
        schemas.push(ColumnSchema {
            name: c.name.clone(),
            ty: c.data.ty(),
        });
    }
    let mut record = Vec::with_capacity(table.columns().len());
    for row in 0..table.rows() {
        record.clear();
        for c in table.columns() {
            record.push(match &c.data {
                ColumnData::Float64(v) => v[row].to_string(),
                ColumnData::Int64(v) => v[row].to_string(),
                other => other.key(row).map(|k| k.to_string()).unwrap_or_default(),
            });
        }
        writer
            .write_record(&record)
            .map_err(|e| Error::Pipeline(format!("events.csv: {e}")))?;
    }
    writer.flush().map_err(|e| Error::io(data_dir.join("events.csv"), e))?;
    let manifest = Manifest {
        tables: vec![TableManifest {
            name: TABLE.into(),
            file: "events.csv".into(),
            partition_key: Some(KEY.into()),
            columns: schemas,
        }],
    };
    write_json(&data_dir.join("manifest.json"), &manifest)?;

    workload.model.save(dir.join("model.json"))?;
    workload.spec().write(dir.join("pipeline.json"))?;
    write_requests(dir.join("requests.csv"), &[KEY.to_string()], &workload.requests)?;

    let mut files = vec![
        "data/events.csv".to_string(),
        "data/manifest.json".into(),
        "model.json".into(),
        "pipeline.json".into(),
        "requests.csv".into(),
    ];
    if workload.config.task == Task::Regression {
        let path = dir.join("holdout.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Pipeline(format!("holdout.csv: {e}")))?;
        let mut header: Vec<String> = workload.features.iter().map(|f| f.feature_id.clone()).collect();
        header.push("label".into());
        w.write_record(&header).map_err(|e| Error::Pipeline(format!("holdout.csv: {e}")))?;
        for (x, label) in &workload.holdout {
            let row: Vec<String> = x.iter().chain(std::iter::once(label)).map(f64::to_string).collect();
            w.write_record(&row).map_err(|e| Error::Pipeline(format!("holdout.csv: {e}")))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        files.push("holdout.csv".into());
    }

    let mut digests = BTreeMap::new();
    for f in files {
        let bytes = fs::read(dir.join(&f)).map_err(|e| Error::io(dir.join(&f), e))?;
        digests.insert(f, hex(&Sha256::digest(&bytes)));
    }
    let manifest = SynthManifest {
        generator: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).into(),
        config_json: serde_json::to_string(&workload.config).expect("config serializes"),
        files: digests,
    };
    write_json(&dir.join(SYNTH_MANIFEST), &manifest)?;
    Ok(manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
