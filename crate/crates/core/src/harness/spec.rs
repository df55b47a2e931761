//! Pipeline spec files.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::Pipeline;
use crate::model::{ModelArtifact, Task, Transform};
use crate::store::{load_dataset, AggregationSpec, Dataset, Operand};
use crate::{Error, Result};

/// How the error bound δ is chosen when no `--delta` flag is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaPolicy {
    Literal(f64),
    /// `"mae:<holdout.csv>"`: mean absolute error of the model on a holdout
    /// table with one column per model input plus `label`.
    Holdout(String),
}

impl Default for DeltaPolicy {
    fn default() -> Self {
        DeltaPolicy::Literal(0.0)
    }
}

/// On-disk pipeline description. Relative paths resolve against the spec
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub name: String,
    pub dataset: PathBuf,
    pub features: Vec<AggregationSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub passthrough: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transforms: Vec<Transform>,
    pub model: PathBuf,
    pub task: Task,
    #[serde(default)]
    pub delta: DeltaPolicy,
}

impl PipelineSpec {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("spec serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Names of every model input, in order: feature ids, then pass-through fields.
    pub fn input_names(&self) -> Vec<String> {
        self.features
            .iter()
            .map(|f| f.feature_id.clone())
            .chain(self.passthrough.iter().cloned())
            .collect()
    }

    /// Request fields the pipeline reads: partition bindings, predicate
    /// operands, and pass-through features.
    pub fn request_fields(&self) -> Vec<String> {
        let mut fields: Vec<String> = Vec::new();
        let mut push = |f: &str| {
            if !fields.iter().any(|x| x == f) {
                fields.push(f.to_string());
            }
        };
        for spec in &self.features {
            if let Some(p) = &spec.partition {
                push(&p.field);
            }
            for c in &spec.predicate {
                if let Operand::Field { field } = &c.operand {
                    push(field);
                }
            }
        }
        for f in &self.passthrough {
            push(f);
        }
        fields
    }
}

/// A pipeline ready to serve, with its resolved default δ.
#[derive(Debug, Clone)]
pub struct LoadedPipeline {
    pub spec: PipelineSpec,
    pub pipeline: Pipeline,
    pub delta: f64,
}

/// Reads a pipeline spec, its dataset and model, and validates everything
/// before any request runs.
pub fn load_pipeline(path: impl AsRef<Path>) -> Result<LoadedPipeline> {
    let path = path.as_ref();
    let spec = PipelineSpec::read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let dataset = Arc::new(load_dataset(base.join(&spec.dataset))?);
    let model = ModelArtifact::load(base.join(&spec.model))?;
    build_pipeline(spec, dataset, model, base)
}

/// Assembles and validates a pipeline from parts already in memory.
pub fn build_pipeline(spec: PipelineSpec, dataset: Arc<Dataset>, model: ModelArtifact, base: &Path) -> Result<LoadedPipeline> {
    if model.task() != spec.task {
        return Err(Error::Pipeline(format!(
            "spec declares a {:?} task but the model is {:?}",
            spec.task,
            model.task()
        )));
    }
    let width = spec.features.len() + spec.passthrough.len();
    let model = if spec.transforms.is_empty() {
        model
    } else {
        model.with_leading_transforms(width, &spec.transforms)?
    };
    let pipeline = Pipeline::new(
        spec.name.clone(),
        dataset,
        spec.features.clone(),
        spec.passthrough.clone(),
        model,
    )?;
    let delta = match &spec.delta {
        DeltaPolicy::Literal(d) => *d,
        DeltaPolicy::Holdout(policy) => {
            let file = policy
                .strip_prefix("mae:")
                .ok_or_else(|| Error::Pipeline(format!("delta policy `{policy}` is neither a number nor mae:<file>")))?;
            holdout_mae(&pipeline.model, &spec.input_names(), &base.join(file))?
        }
    };
    if spec.task == Task::Classification && delta != 0.0 {
        return Err(Error::Pipeline(format!("classification pipelines require delta = 0, got {delta}")));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Pipeline(format!("delta = {delta} must be finite and non-negative")));
    }
    Ok(LoadedPipeline { spec, pipeline, delta })
}

/// Mean absolute error of `model` on a holdout CSV.
pub fn holdout_mae(model: &ModelArtifact, inputs: &[String], path: &Path) -> Result<f64> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Pipeline(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Pipeline(format!("{}: {e}", path.display())))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Pipeline(format!("{}: missing column `{name}`", path.display())))
    };
    let positions = inputs.iter().map(|n| column(n)).collect::<Result<Vec<_>>>()?;
    let label = column("label")?;
    let mut total = 0.0;
    let mut rows = 0usize;
    let mut x = vec![0.0; inputs.len()];
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Pipeline(format!("{}: {e}", path.display())))?;
        let cell = |pos: usize| -> Result<f64> {
            let raw = record.get(pos).unwrap_or("");
            raw.trim()
                .parse()
                .map_err(|_| Error::Pipeline(format!("{}: row {}: `{raw}` is not a number", path.display(), i + 1)))
        };
        for (slot, &pos) in x.iter_mut().zip(&positions) {
            *slot = cell(pos)?;
        }
        total += (model.evaluate(&x)? - cell(label)?).abs();
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Pipeline(format!("{}: holdout has no rows", path.display())));
    }
    Ok(total / rows as f64)
}
