use serde::{Deserialize, Serialize};

use super::{check_finite, ModelError, Task};

/// Fully connected layer; `weights` is `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn apply(&self, x: &[f64], relu: bool) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| {
                let z = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b;
                if relu {
                    z.max(0.0)
                } else {
                    z
                }
            })
            .collect()
    }
}

/// ReLU hidden layers, identity output. Classification takes the argmax of
/// the raw outputs, which equals the softmax argmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub(super) fn validate(&self, width: usize, task: Task) -> Result<(), ModelError> {
        if self.layers.is_empty() {
            return Err(ModelError::invalid("body.layers", "no layers"));
        }
        let mut expected = width;
        for (i, layer) in self.layers.iter().enumerate() {
            let path = format!("body.layers[{i}]");
            if layer.weights.is_empty() || layer.weights.len() != layer.bias.len() {
                return Err(ModelError::invalid(
                    format!("{path}.bias"),
                    format!("{} rows vs {} biases", layer.weights.len(), layer.bias.len()),
                ));
            }
            if layer.inputs() != expected {
                return Err(ModelError::invalid(
                    format!("{path}.weights"),
                    format!("takes {} inputs, previous width is {expected}", layer.inputs()),
                ));
            }
            for (r, row) in layer.weights.iter().enumerate() {
                if row.len() != expected {
                    return Err(ModelError::invalid(format!("{path}.weights[{r}]"), "ragged weight matrix"));
                }
                check_finite(row, &format!("{path}.weights[{r}]"))?;
            }
            check_finite(&layer.bias, &format!("{path}.bias"))?;
            expected = layer.weights.len();
        }
        match task {
            Task::Regression if expected != 1 => Err(ModelError::invalid("body.layers", "regression output width must be 1")),
            Task::Classification if expected < 2 => Err(ModelError::invalid("body.layers", "classification needs at least two outputs")),
            _ => Ok(()),
        }
    }

    pub(super) fn forward(&self, x: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(&h, i < last);
        }
        h
    }
}
