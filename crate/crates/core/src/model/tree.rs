use serde::{Deserialize, Serialize};

use super::{check_finite, ModelError, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    /// Random forest.
    Average,
    /// Gradient boosting.
    Sum,
}

/// Tree node. Splits send `x[feature] < threshold` left, everything else
/// right; children always have larger indices than their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        leaf: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    #[inline]
    fn leaf(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] < *threshold { *left } else { *right },
                Node::Leaf { leaf } => return leaf,
            }
        }
    }

    fn validate(&self, width: usize, outputs: usize, path: &str) -> Result<(), ModelError> {
        if self.nodes.is_empty() {
            return Err(ModelError::invalid(format!("{path}.nodes"), "empty tree"));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let here = format!("{path}.nodes[{i}]");
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= width {
                        return Err(ModelError::invalid(
                            format!("{here}.feature"),
                            format!("index {feature} outside input width {width}"),
                        ));
                    }
                    check_finite(&[*threshold], &format!("{here}.threshold"))?;
                    for (name, child) in [("left", left), ("right", right)] {
                        if *child <= i || *child >= self.nodes.len() {
                            return Err(ModelError::invalid(
                                format!("{here}.{name}"),
                                format!("child {child} must lie in ({i}, {})", self.nodes.len()),
                            ));
                        }
                    }
                }
                Node::Leaf { leaf } => {
                    if leaf.len() != outputs {
                        return Err(ModelError::invalid(
                            format!("{here}.leaf"),
                            format!("{} scores, expected {outputs}", leaf.len()),
                        ));
                    }
                    check_finite(leaf, &format!("{here}.leaf"))?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    /// Scores per leaf: 1 for regression, one per class otherwise.
    pub outputs: usize,
    pub combine: Combine,
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

impl TreeEnsemble {
    pub(super) fn validate(&self, width: usize, task: Task) -> Result<(), ModelError> {
        match task {
            Task::Regression if self.outputs != 1 => {
                return Err(ModelError::invalid("body.outputs", "regression ensembles have one output"))
            }
            Task::Classification if self.outputs < 2 => {
                return Err(ModelError::invalid("body.outputs", "classification needs at least two classes"))
            }
            _ => {}
        }
        if self.trees.is_empty() {
            return Err(ModelError::invalid("body.trees", "empty ensemble"));
        }
        check_finite(&[self.base_score], "body.base_score")?;
        for (t, tree) in self.trees.iter().enumerate() {
            tree.validate(width, self.outputs, &format!("body.trees[{t}]"))?;
        }
        Ok(())
    }

    fn finish(&self, total: f64) -> f64 {
        match self.combine {
            Combine::Sum => self.base_score + total,
            Combine::Average => self.base_score + total / self.trees.len() as f64,
        }
    }

    #[inline]
    pub(super) fn scalar(&self, x: &[f64]) -> f64 {
        let total: f64 = self.trees.iter().map(|t| t.leaf(x)[0]).sum();
        self.finish(total)
    }

    pub(super) fn scores(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.outputs];
        for t in &self.trees {
            for (a, v) in acc.iter_mut().zip(t.leaf(x)) {
                *a += v;
            }
        }
        acc.into_iter().map(|s| self.finish(s)).collect()
    }
}
