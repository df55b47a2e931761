//! Approximate model inference: run the model over the QMC feature
//! ensemble, fit the distribution of the exact prediction Y, and check the
//! accuracy guarantee `Pr(|Y - ŷ| <= δ) >= τ`.

use crate::estimate::FeatureEstimate;
use crate::exec::Execution;
use crate::model::{ModelArtifact, ModelError, PredictionValue, Task};
use crate::qmc::QmcMatrices;
use crate::stats::normal_cdf;
use crate::{Error, Result};

/// Distribution of `U_y = Y − ŷ`.
#[derive(Debug, Clone, PartialEq)]
pub enum InferenceUncertainty {
    Normal { mu: f64, sigma: f64 },
    Bernoulli { failure_p: f64, class_probs: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleStats {
    /// ȳ (regression) or p_ŷ (classification).
    pub mean: f64,
    /// σ_y² around ȳ, or p_ŷ(1 − p_ŷ) for classification.
    pub variance: f64,
    /// Mean squared deviation from ŷ instead of ȳ; reported for comparison.
    pub variance_about_prediction: f64,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOutcome {
    /// ŷ = M(x̂).
    pub prediction: PredictionValue,
    pub uncertainty: InferenceUncertainty,
    pub stats: EnsembleStats,
    /// No input varied: every feature was exact.
    pub exact: bool,
}

impl InferenceOutcome {
    /// Var(Y | z) as used by the planner.
    pub fn variance(&self) -> f64 {
        self.stats.variance
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationResult {
    pub passed: bool,
    /// Probability mass of `U_y` inside `(−δ, δ)`.
    pub achieved: f64,
}

/// Model outputs on the A matrix: regression values or class indices.
pub fn evaluate_rows(model: &ModelArtifact, rows: &crate::Matrix, exec: Execution) -> Result<Vec<f64>> {
    let out = model.evaluate_batch(rows, exec).map_err(Error::from)?;
    if let Some(row) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::PoisonedSample { row });
    }
    Ok(out)
}

/// Runs the ensemble on `matrices.a` and fits U_y. Returns the outcome and
/// the cached `f_A` evaluations.
pub fn propagate(
    model: &ModelArtifact,
    estimates: &[FeatureEstimate],
    matrices: &QmcMatrices,
    exec: Execution,
) -> Result<(InferenceOutcome, Vec<f64>)> {
    if estimates.len() != model.arity() || matrices.a.cols() != model.arity() {
        return Err(Error::Model(ModelError::Arity {
            expected: model.arity(),
            got: estimates.len(),
        }));
    }
    let x_hat: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    let prediction = model.predict(&x_hat)?;
    let m = matrices.ensemble_size();
    let exact = matrices.k() == 0;
    let f_a = if exact {
        vec![prediction.as_scalar(); m]
    } else {
        evaluate_rows(model, &matrices.a, exec)?
    };
    let outcome = fit(model.task(), prediction, &f_a, exact);
    Ok((outcome, f_a))
}

/// Fits the distribution of Y from ensemble outputs.
pub fn fit(task: Task, prediction: PredictionValue, f_a: &[f64], exact: bool) -> InferenceOutcome {
    let m = f_a.len();
    match task {
        Task::Regression => {
            let y_hat = prediction.as_scalar();
            let (mean, variance) = shifted_moments(f_a);
            let about = f_a.iter().map(|y| (y - y_hat) * (y - y_hat)).sum::<f64>() / m.max(1) as f64;
            log::trace!("ensemble variance {variance:.6e} around ȳ, {about:.6e} around ŷ");
            InferenceOutcome {
                uncertainty: InferenceUncertainty::Normal {
                    mu: mean - y_hat,
                    sigma: variance.sqrt(),
                },
                stats: EnsembleStats {
                    mean,
                    variance,
                    variance_about_prediction: about,
                    m,
                },
                prediction,
                exact,
            }
        }
        Task::Classification => {
            let classes = match &prediction {
                PredictionValue::Classification { scores, .. } => scores.len(),
                PredictionValue::Regression(_) => 1,
            };
            let y_hat = prediction.class().unwrap_or(0);
            let mut counts = vec![0usize; classes];
            for &c in f_a {
                counts[c as usize] += 1;
            }
            let class_probs: Vec<f64> = counts.iter().map(|&c| c as f64 / m as f64).collect();
            let p = class_probs[y_hat];
            let variance = p * (1.0 - p);
            InferenceOutcome {
                uncertainty: InferenceUncertainty::Bernoulli {
                    failure_p: 1.0 - p,
                    class_probs,
                },
                stats: EnsembleStats {
                    mean: p,
                    variance,
                    variance_about_prediction: 1.0 - p,
                    m,
                },
                prediction,
                exact,
            }
        }
    }
}

/// Mean and population variance, shifted by the first value so a constant
/// ensemble yields exactly that constant and zero.
fn shifted_moments(values: &[f64]) -> (f64, f64) {
    let Some(&first) = values.first() else {
        return (0.0, 0.0);
    };
    let m = values.len() as f64;
    let shift_mean = values.iter().map(|v| v - first).sum::<f64>() / m;
    let mean = first + shift_mean;
    let var = values.iter().map(|v| (v - first - shift_mean).powi(2)).sum::<f64>() / m;
    (mean, var)
}

/// Probability that the error lies inside `(−δ, δ)`, checked against τ.
///
/// Regression uses `N(ȳ − ŷ, σ_y²)`; classification requires `δ = 0` and
/// uses `p_ŷ`. A confidence of 1 is only certified by exact features.
pub fn validate(outcome: &InferenceOutcome, delta: f64, tau: f64) -> Result<ValidationResult> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Config(format!("confidence τ = {tau} outside (0, 1]")));
    }
    let achieved = match &outcome.uncertainty {
        InferenceUncertainty::Normal { mu, sigma } => {
            if delta.is_nan() || delta < 0.0 {
                return Err(Error::Config(format!("error bound δ = {delta} must be non-negative")));
            }
            normal_mass_within(*mu, *sigma, delta)
        }
        InferenceUncertainty::Bernoulli { failure_p, .. } => {
            if delta != 0.0 {
                return Err(Error::Config(format!("classification requires δ = 0, got {delta}")));
            }
            1.0 - failure_p
        }
    };
    let passed = achieved >= tau && (tau < 1.0 || outcome.exact);
    Ok(ValidationResult { passed, achieved })
}

/// `Φ((δ−μ)/σ) − Φ((−δ−μ)/σ)`, evaluated on the side that avoids
/// cancellation.
pub fn normal_mass_within(mu: f64, sigma: f64, delta: f64) -> f64 {
    if sigma == 0.0 {
        return if mu.abs() <= delta { 1.0 } else { 0.0 };
    }
    let hi = (delta - mu) / sigma;
    let lo = (-delta - mu) / sigma;
    let mass = if lo > 0.0 {
        normal_cdf(-lo) - normal_cdf(-hi)
    } else {
        normal_cdf(hi) - normal_cdf(lo)
    };
    mass.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::UncertaintyDist;
    use crate::model::{Linear, ModelBody};
    use crate::qmc::{build_saltelli, SobolGenerator};

    fn est(value: f64, sigma: f64) -> FeatureEstimate {
        FeatureEstimate {
            feature_id: "f".into(),
            value,
            uncertainty: UncertaintyDist::normal(sigma),
            n: 10,
            population: 100,
        }
    }

    fn linear(w: Vec<f64>) -> ModelArtifact {
        let arity = w.len();
        ModelArtifact::new(Task::Regression, arity, vec![], ModelBody::Linear(Linear { weights: w, bias: 0.0 })).unwrap()
    }

    #[test]
    fn all_point_mass_is_exact() {
        let model = linear(vec![0.1, 0.7]);
        let e = [est(0.1, 0.0), est(0.3, 0.0)];
        let mut gen = SobolGenerator::new(4).unwrap();
        let q = build_saltelli(&mut gen, 1000, &e).unwrap();
        let (out, _) = propagate(&model, &e, &q, Execution::Parallel).unwrap();
        assert_eq!(out.stats.mean, out.prediction.as_scalar());
        assert_eq!(out.uncertainty, InferenceUncertainty::Normal { mu: 0.0, sigma: 0.0 });
        let v = validate(&out, 0.0, 1.0).unwrap();
        assert!(v.passed);
        assert_eq!(v.achieved, 1.0);
    }

    #[test]
    fn linear_variance_at_m_1000() {
        let model = linear(vec![1.0, 2.0]);
        let e = [est(0.0, 1.0), est(0.0, 1.0)];
        let mut gen = SobolGenerator::new(4).unwrap();
        let q = build_saltelli(&mut gen, 1000, &e).unwrap();
        let (out, _) = propagate(&model, &e, &q, Execution::Sequential).unwrap();
        assert!((out.stats.variance - 5.0).abs() <= 0.05 * 5.0, "{}", out.stats.variance);
    }

    #[test]
    fn classification_frequency() {
        let pred = PredictionValue::Classification { class: 1, scores: vec![0.0, 1.0] };
        let f_a: Vec<f64> = (0..1000).map(|i| if i < 970 { 1.0 } else { 0.0 }).collect();
        let out = fit(Task::Classification, pred, &f_a, false);
        match &out.uncertainty {
            InferenceUncertainty::Bernoulli { failure_p, class_probs } => {
                assert!((failure_p - 0.03).abs() < 1e-12);
                assert!((class_probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        assert!(validate(&out, 0.0, 0.95).unwrap().passed);
        assert!(validate(&out, 0.5, 0.95).is_err());
    }

    #[test]
    fn normal_mass_reference() {
        // Φ(1.959964) − Φ(−1.959964) = 0.9500000...
        let v = normal_mass_within(0.0, 1.0, 1.959964);
        assert!((v - 0.95).abs() < 1e-6, "{v}");
        assert_eq!(normal_mass_within(0.0, 0.0, 0.0), 1.0);
        assert_eq!(normal_mass_within(0.5, 0.0, 0.1), 0.0);
    }

    #[test]
    fn confidence_one_requires_exact_features() {
        let out = fit(Task::Regression, PredictionValue::Regression(0.0), &[1e-9, -1e-9], false);
        let v = validate(&out, 1.0, 1.0).unwrap();
        assert_eq!(v.achieved, 1.0);
        assert!(!v.passed);
    }

    #[test]
    fn mass_is_monotone() {
        let mut last = 1.0;
        for i in 0..50 {
            let v = normal_mass_within(i as f64 * 0.1, 1.0, 1.0);
            assert!(v <= last + 1e-15);
            last = v;
        }
        let mut last = 0.0;
        for i in (1..50).rev() {
            let v = normal_mass_within(0.3, i as f64 * 0.1, 1.0);
            assert!(v + 1e-15 >= last);
            last = v;
        }
    }
}
