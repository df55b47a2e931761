use serde::{Deserialize, Serialize};

use super::{check_finite, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Transform {
    /// `(x - mean) / scale` elementwise over the current width.
    StandardScaler { mean: Vec<f64>, scale: Vec<f64> },
    /// Replaces input `input` with indicators over `categories`, in place.
    OneHot { input: usize, categories: Vec<f64> },
}

impl Transform {
    /// Checks parameters against the incoming width and returns the
    /// outgoing width.
    pub(super) fn validate(&self, width: usize, path: &str) -> Result<usize, ModelError> {
        match self {
            Transform::StandardScaler { mean, scale } => {
                if mean.len() != width || scale.len() != width {
                    return Err(ModelError::invalid(
                        path,
                        format!("scaler lengths {}/{} do not match width {width}", mean.len(), scale.len()),
                    ));
                }
                check_finite(mean, &format!("{path}.mean"))?;
                check_finite(scale, &format!("{path}.scale"))?;
                if let Some(i) = scale.iter().position(|s| *s <= 0.0) {
                    return Err(ModelError::invalid(format!("{path}.scale[{i}]"), "scale must be positive"));
                }
                Ok(width)
            }
            Transform::OneHot { input, categories } => {
                if *input >= width {
                    return Err(ModelError::invalid(
                        format!("{path}.input"),
                        format!("index {input} outside width {width}"),
                    ));
                }
                if categories.is_empty() {
                    return Err(ModelError::invalid(format!("{path}.categories"), "empty"));
                }
                check_finite(categories, &format!("{path}.categories"))?;
                Ok(width - 1 + categories.len())
            }
        }
    }

    pub fn apply(&self, mut x: Vec<f64>) -> Vec<f64> {
        match self {
            Transform::StandardScaler { mean, scale } => {
                for ((v, m), s) in x.iter_mut().zip(mean).zip(scale) {
                    *v = (*v - m) / s;
                }
                x
            }
            Transform::OneHot { input, categories } => {
                let value = x[*input];
                let indicators = categories.iter().map(|c| if *c == value { 1.0 } else { 0.0 });
                x.splice(*input..*input + 1, indicators);
                x
            }
        }
    }
}
