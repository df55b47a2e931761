//! Inference operators loaded from a portable JSON model document:
//! linear models, tree ensembles (GBDT or random forest), and ReLU MLPs,
//! each behind an optional chain of standard-scaling and one-hot
//! transforms.

mod document;
mod linear;
mod mlp;
mod transform;
mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Execution};
use crate::Matrix;

pub use linear::Linear;
pub use mlp::{Dense, Mlp};
pub use transform::Transform;
pub use tree::{Combine, Node, Tree, TreeEnsemble};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("model document {path}: {message}")]
    Invalid { path: String, message: String },

    #[error("unknown model kind `{0}`")]
    UnknownKind(String),

    #[error("model kind `{0}` is reserved but not supported")]
    ReservedKind(String),

    #[error("expected {expected} inputs, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("input {index} is not finite")]
    NonFiniteInput { index: usize },

    #[error("cannot read model {path}: {message}")]
    Io { path: String, message: String },
}

impl ModelError {
    pub(crate) fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        ModelError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelBody {
    Linear(Linear),
    TreeEnsemble(TreeEnsemble),
    Mlp(Mlp),
}

impl ModelBody {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelBody::Linear(_) => "linear",
            ModelBody::TreeEnsemble(_) => "tree_ensemble",
            ModelBody::Mlp(_) => "mlp",
        }
    }
}

/// Model output. Classification carries raw per-class scores; the decision
/// is their argmax with ties going to the lowest class index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredictionValue {
    Regression(f64),
    Classification { class: usize, scores: Vec<f64> },
}

impl PredictionValue {
    /// Regression value, or the class index as a float.
    pub fn as_scalar(&self) -> f64 {
        match self {
            PredictionValue::Regression(v) => *v,
            PredictionValue::Classification { class, .. } => *class as f64,
        }
    }

    pub fn class(&self) -> Option<usize> {
        match self {
            PredictionValue::Classification { class, .. } => Some(*class),
            PredictionValue::Regression(_) => None,
        }
    }
}

/// A validated, immutable inference operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    task: Task,
    arity: usize,
    transforms: Vec<Transform>,
    body: ModelBody,
}

impl ModelArtifact {
    /// Validates shapes and parameters; errors carry a document field path.
    pub fn new(task: Task, arity: usize, transforms: Vec<Transform>, body: ModelBody) -> Result<Self, ModelError> {
        if arity == 0 {
            return Err(ModelError::invalid("arity", "must be at least 1"));
        }
        let mut width = arity;
        for (i, t) in transforms.iter().enumerate() {
            width = t.validate(width, &format!("transforms[{i}]"))?;
        }
        match &body {
            ModelBody::Linear(m) => m.validate(width, task)?,
            ModelBody::TreeEnsemble(m) => m.validate(width, task)?,
            ModelBody::Mlp(m) => m.validate(width, task)?,
        }
        Ok(Self {
            task,
            arity,
            transforms,
            body,
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// Raw input width, before transforms.
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn body(&self) -> &ModelBody {
        &self.body
    }

    /// Returns a copy taking `input_arity` raw inputs, with `extra`
    /// transforms applied before this model's own. `extra` must produce
    /// exactly this model's arity.
    pub fn with_leading_transforms(&self, input_arity: usize, extra: &[Transform]) -> Result<Self, ModelError> {
        let mut width = input_arity;
        for (i, t) in extra.iter().enumerate() {
            width = t.validate(width, &format!("pipeline.transforms[{i}]"))?;
        }
        if width != self.arity {
            return Err(ModelError::Arity {
                expected: self.arity,
                got: width,
            });
        }
        let mut transforms = extra.to_vec();
        transforms.extend(self.transforms.iter().cloned());
        Self::new(self.task, input_arity, transforms, self.body.clone())
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.arity {
            return Err(ModelError::Arity {
                expected: self.arity,
                got: x.len(),
            });
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteInput { index });
        }
        Ok(())
    }

    fn with_transformed<R>(&self, x: &[f64], f: impl FnOnce(&[f64]) -> R) -> R {
        if self.transforms.is_empty() {
            return f(x);
        }
        let mut buf = x.to_vec();
        for t in &self.transforms {
            buf = t.apply(buf);
        }
        f(&buf)
    }

    fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.with_transformed(x, |z| match &self.body {
            ModelBody::Linear(m) => m.scores(z, self.task),
            ModelBody::TreeEnsemble(m) => m.scores(z),
            ModelBody::Mlp(m) => m.forward(z),
        })
    }

    /// Single prediction; pure and deterministic.
    pub fn predict(&self, x: &[f64]) -> Result<PredictionValue, ModelError> {
        self.check_input(x)?;
        let scores = self.scores(x);
        Ok(match self.task {
            Task::Regression => PredictionValue::Regression(scores[0]),
            Task::Classification => PredictionValue::Classification {
                class: argmax(&scores),
                scores,
            },
        })
    }

    /// Regression value or class index. Same result as
    /// `predict(x)?.as_scalar()` but skips building score vectors where the
    /// body allows.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.check_input(x)?;
        Ok(match self.task {
            Task::Regression => self.with_transformed(x, |z| match &self.body {
                ModelBody::TreeEnsemble(m) => m.scalar(z),
                ModelBody::Linear(m) => m.scalar(z),
                ModelBody::Mlp(m) => m.forward(z)[0],
            }),
            Task::Classification => argmax(&self.scores(x)) as f64,
        })
    }

    /// Row-wise [`ModelArtifact::predict`]; rows may run concurrently.
    pub fn predict_batch(&self, rows: &Matrix, exec: Execution) -> Result<Vec<PredictionValue>, ModelError> {
        exec::try_map_indices(exec, rows.rows(), |i| self.predict(rows.row(i)))
    }

    /// Row-wise [`ModelArtifact::evaluate`].
    pub fn evaluate_batch(&self, rows: &Matrix, exec: Execution) -> Result<Vec<f64>, ModelError> {
        exec::try_map_indices(exec, rows.rows(), |i| self.evaluate(rows.row(i)))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        document::decode(text)
    }

    /// Canonical serialization: fixed field order, pretty-printed.
    pub fn to_json(&self) -> String {
        document::encode(self)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn check_finite(values: &[f64], path: &str) -> Result<(), ModelError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(ModelError::invalid(format!("{path}[{i}]"), "non-finite parameter")),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests;
