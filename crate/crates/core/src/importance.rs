//! First-order Sobol main-effect indices from Saltelli evaluations.

use crate::exec::Execution;
use crate::model::ModelArtifact;
use crate::propagate::evaluate_rows;
use crate::qmc::QmcMatrices;
use crate::{Error, Result};

/// Variances below this are treated as a constant model.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceVector {
    /// One index per model input, in input order; constant inputs hold 0.
    pub indices: Vec<f64>,
    /// Population variance of `f_A`.
    pub total_variance: f64,
}

/// Model evaluations over the B matrix and each hybrid `AB_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaltelliEvaluations {
    pub f_b: Vec<f64>,
    pub f_ab: Vec<Vec<f64>>,
}

/// Evaluates the model on `B` and every `AB_j`.
pub fn evaluate_hybrids(model: &ModelArtifact, matrices: &QmcMatrices, exec: Execution) -> Result<SaltelliEvaluations> {
    let f_b = evaluate_rows(model, &matrices.b, exec)?;
    let f_ab = matrices
        .ab
        .iter()
        .map(|ab| evaluate_rows(model, ab, exec))
        .collect::<Result<Vec<_>>>()?;
    Ok(SaltelliEvaluations { f_b, f_ab })
}

/// Maps class-index evaluations to the indicator `1{class == target}`.
pub fn class_indicator(values: &[f64], target: usize) -> Vec<f64> {
    values.iter().map(|&c| if c as usize == target { 1.0 } else { 0.0 }).collect()
}

/// Saltelli (2010) first-order estimator
/// `I_j = mean(f_B · (f_AB_j − f_A)) / Var(f_A)`, clipped to `[0, 1]`.
///
/// `f_ab[i]` belongs to input `varying[i]`; `width` is the total input
/// count so constant inputs get explicit zeros.
pub fn main_effect_indices(
    f_a: &[f64],
    f_b: &[f64],
    f_ab: &[Vec<f64>],
    varying: &[usize],
    width: usize,
) -> Result<ImportanceVector> {
    let m = f_a.len();
    if f_b.len() != m || f_ab.iter().any(|v| v.len() != m) {
        return Err(Error::LengthMismatch(format!(
            "evaluation vectors must share length {m}"
        )));
    }
    if f_ab.len() != varying.len() || varying.iter().any(|&j| j >= width) {
        return Err(Error::LengthMismatch(format!(
            "{} hybrid vectors for {} varying inputs of {width}",
            f_ab.len(),
            varying.len()
        )));
    }
    let mut indices = vec![0.0; width];
    if m == 0 {
        return Ok(ImportanceVector { indices, total_variance: 0.0 });
    }
    let mean = f_a.iter().sum::<f64>() / m as f64;
    let total_variance = f_a.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / m as f64;
    if total_variance < VARIANCE_FLOOR {
        return Ok(ImportanceVector { indices, total_variance });
    }
    for (hybrid, &j) in f_ab.iter().zip(varying) {
        let cov = f_b
            .iter()
            .zip(hybrid)
            .zip(f_a)
            .map(|((b, ab), a)| b * (ab - a))
            .sum::<f64>()
            / m as f64;
        indices[j] = (cov / total_variance).clamp(0.0, 1.0);
    }
    Ok(ImportanceVector { indices, total_variance })
}

/// Predicted drop in Var(Y) from taking direction `dz`:
/// `Σ I_j · Δz_j / (N_j − z_j) · V̂`.
pub fn expected_variance_reduction(
    indices: &[f64],
    z: &[usize],
    population: &[usize],
    dz: &[bool],
    total_variance: f64,
) -> Result<f64> {
    let k = indices.len();
    if z.len() != k || population.len() != k || dz.len() != k {
        return Err(Error::LengthMismatch(format!("expected {k} entries per vector")));
    }
    let mut sum = 0.0;
    for j in 0..k {
        if !dz[j] {
            continue;
        }
        if z[j] >= population[j] {
            return Err(Error::Invariant(format!(
                "feature {j} is exhausted (z = N = {}) but selected",
                population[j]
            )));
        }
        sum += indices[j] / (population[j] - z[j]) as f64;
    }
    Ok(sum * total_variance)
}
