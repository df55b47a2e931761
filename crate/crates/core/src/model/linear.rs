use serde::{Deserialize, Serialize};

use super::{check_finite, ModelError, Task};

/// `w·x + b`. As a classifier it is binary: scores `[0, w·x + b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Linear {
    pub(super) fn validate(&self, width: usize, _task: Task) -> Result<(), ModelError> {
        if self.weights.len() != width {
            return Err(ModelError::invalid(
                "body.weights",
                format!("length {} does not match input width {width}", self.weights.len()),
            ));
        }
        check_finite(&self.weights, "body.weights")?;
        check_finite(&[self.bias], "body.bias")
    }

    #[inline]
    pub(super) fn scalar(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub(super) fn scores(&self, x: &[f64], task: Task) -> Vec<f64> {
        match task {
            Task::Regression => vec![self.scalar(x)],
            Task::Classification => vec![0.0, self.scalar(x)],
        }
    }
}
