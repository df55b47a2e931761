//! The per-request serving loop and the exact baseline.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::estimate::{estimate, EstimatorConfig, FeatureEstimate, DEFAULT_BOOTSTRAP_B};
use crate::exec::Execution;
use crate::importance::{class_indicator, evaluate_hybrids, main_effect_indices};
use crate::model::{ModelArtifact, ModelError, PredictionValue, Task};
use crate::planner::{apply_step, initial_plan, next_direction, ApproximationPlan, PlannerConfig};
use crate::propagate::{propagate, validate};
use crate::qmc::{build_saltelli, SobolGenerator, MIN_ENSEMBLE};
use crate::store::{exact_aggregate, AggregationSpec, Dataset, FeatureSampleState, RequestRecord};
use crate::{Error, Result};

/// Per-request accuracy target and sampling knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestConfig {
    /// Error bound δ in target units; 0 for classification.
    pub delta: f64,
    /// Confidence τ.
    pub tau: f64,
    /// QMC ensemble size m.
    pub m: usize,
    pub seed: u64,
    pub planner: PlannerConfig,
    pub bootstrap_b: usize,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for RequestConfig {
    fn default() -> Self {
        Self {
            delta: 0.0,
            tau: 0.95,
            m: 1000,
            seed: 0,
            planner: PlannerConfig::default(),
            bootstrap_b: DEFAULT_BOOTSTRAP_B,
            exec: Execution::default(),
        }
    }
}

impl RequestConfig {
    pub fn validate(&self, task: Task) -> Result<()> {
        self.planner.validate()?;
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau = {} outside (0, 1]", self.tau)));
        }
        if self.m < MIN_ENSEMBLE {
            return Err(Error::Config(format!("QMC ensemble size {} below {MIN_ENSEMBLE}", self.m)));
        }
        match task {
            Task::Classification if self.delta != 0.0 => {
                Err(Error::Config(format!("classification requires delta = 0, got {}", self.delta)))
            }
            Task::Regression if !(self.delta >= 0.0 && self.delta.is_finite()) => {
                Err(Error::Config(format!("delta = {} must be finite and non-negative", self.delta)))
            }
            _ => self.estimator().validate(),
        }
    }

    fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            bootstrap_b: self.bootstrap_b,
            cross_check: false,
            exec: self.exec,
        }
    }
}

/// A validated inference pipeline: aggregation features, then pass-through
/// request fields, feeding one model.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub name: String,
    pub dataset: Arc<Dataset>,
    pub features: Vec<AggregationSpec>,
    pub passthrough: Vec<String>,
    pub model: ModelArtifact,
}

impl Pipeline {
    pub fn new(
        name: impl Into<String>,
        dataset: Arc<Dataset>,
        features: Vec<AggregationSpec>,
        passthrough: Vec<String>,
        model: ModelArtifact,
    ) -> Result<Self> {
        for spec in &features {
            spec.validate(&dataset)?;
        }
        let width = features.len() + passthrough.len();
        if width != model.arity() {
            return Err(Error::Model(ModelError::Arity {
                expected: model.arity(),
                got: width,
            }));
        }
        let mut ids: Vec<&str> = features.iter().map(|f| f.feature_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Pipeline(format!("duplicate feature id `{}`", w[0])));
        }
        Ok(Self {
            name: name.into(),
            dataset,
            features,
            passthrough,
            model,
        })
    }

    pub fn task(&self) -> Task {
        self.model.task()
    }

    fn passthrough_values(&self, request: &RequestRecord) -> Result<Vec<f64>> {
        self.passthrough
            .iter()
            .map(|field| {
                request.get(field).and_then(|v| v.as_f64()).ok_or_else(|| Error::Request {
                    id: request.id,
                    reason: format!("pass-through field `{field}` is missing or not numeric"),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalMode {
    Validated,
    ExactFallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureUsage {
    pub feature_id: String,
    pub n: usize,
    pub population: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServeReport {
    pub id: u64,
    pub prediction: PredictionValue,
    pub achieved: f64,
    pub iterations: usize,
    pub features: Vec<FeatureUsage>,
    pub rows_scanned: usize,
    pub terminal: TerminalMode,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactReport {
    pub id: u64,
    pub prediction: PredictionValue,
    pub rows_scanned: usize,
    pub wall_time_s: f64,
}

/// Serves one request: sample, estimate, propagate, validate, and refine
/// the plan until the accuracy target holds or every feature is exact.
pub fn serve_request(pipeline: &Pipeline, request: &RequestRecord, config: &RequestConfig) -> Result<ServeReport> {
    let start = Instant::now();
    config.validate(pipeline.task())?;
    let passthrough = pipeline.passthrough_values(request)?;
    let mut states = pipeline
        .features
        .iter()
        .map(|spec| FeatureSampleState::open(&pipeline.dataset, spec, request, config.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let population: Vec<usize> = states.iter().map(FeatureSampleState::population).collect();
    let estimator = config.estimator();
    let step = config.planner.step_size(&population);
    let mut plan = initial_plan(&population, &config.planner);
    let cap = plan.iteration_bound(step) + 1;
    let k = states.len();

    let mut iterations = 0;
    loop {
        iterations += 1;
        assert!(
            iterations <= cap,
            "request {}: iteration {iterations} exceeds bound {cap}",
            request.id
        );
        for (state, &z) in states.iter_mut().zip(plan.z()) {
            state.draw_to(z);
        }
        let mut estimates = states
            .iter()
            .map(|s| estimate(s, &estimator))
            .collect::<Result<Vec<_>>>()?;
        for (field, &value) in pipeline.passthrough.iter().zip(&passthrough) {
            estimates.push(FeatureEstimate::exact(field.clone(), value, 1));
        }

        let varying = estimates.iter().filter(|e| !e.is_point_mass()).count();
        let mut gen = SobolGenerator::new((2 * varying).max(1))?;
        let matrices = build_saltelli(&mut gen, config.m, &estimates)?;
        let (outcome, f_a) = propagate(&pipeline.model, &estimates, &matrices, config.exec)
            .map_err(|e| poisoned(e, request.id, &plan))?;
        let check = validate(&outcome, config.delta, config.tau)?;
        log::debug!(
            "request {} iteration {iterations}: plan {:?}, achieved {:.4}",
            request.id,
            plan.z(),
            check.achieved
        );

        if check.passed {
            let terminal = if plan.is_exhausted() {
                TerminalMode::ExactFallback
            } else {
                TerminalMode::Validated
            };
            return Ok(ServeReport {
                id: request.id,
                prediction: outcome.prediction,
                achieved: check.achieved,
                iterations,
                features: states
                    .iter()
                    .map(|s| FeatureUsage {
                        feature_id: s.feature_id().to_string(),
                        n: s.drawn(),
                        population: s.population(),
                    })
                    .collect(),
                rows_scanned: states.iter().map(FeatureSampleState::drawn).sum(),
                terminal,
                wall_time_s: start.elapsed().as_secs_f64(),
            });
        }
        if plan.is_exhausted() {
            return Err(Error::Invariant(format!(
                "request {}: exact features failed validation (achieved {})",
                request.id, check.achieved
            )));
        }

        let evals = evaluate_hybrids(&pipeline.model, &matrices, config.exec)
            .map_err(|e| poisoned(e, request.id, &plan))?;
        let importance = match (pipeline.task(), outcome.prediction.class()) {
            (Task::Classification, Some(target)) => main_effect_indices(
                &class_indicator(&f_a, target),
                &class_indicator(&evals.f_b, target),
                &evals
                    .f_ab
                    .iter()
                    .map(|v| class_indicator(v, target))
                    .collect::<Vec<_>>(),
                &matrices.varying,
                estimates.len(),
            )?,
            _ => main_effect_indices(&f_a, &evals.f_b, &evals.f_ab, &matrices.varying, estimates.len())?,
        };
        let direction = next_direction(&importance.indices[..k], &plan)?;
        plan = if direction.is_empty() {
            ApproximationPlan::new(population.clone(), population.clone())?
        } else {
            apply_step(&plan, &direction, step)?
        };
    }
}

fn poisoned(err: Error, id: u64, plan: &ApproximationPlan) -> Error {
    match err {
        Error::PoisonedSample { row } => Error::Request {
            id,
            reason: format!("model output is non-finite at ensemble row {row} (plan {:?})", plan.z()),
        },
        other => other,
    }
}

/// Computes every feature over its full partition and runs the model once.
pub fn exact_serve(pipeline: &Pipeline, request: &RequestRecord) -> Result<ExactReport> {
    let start = Instant::now();
    let mut inputs = Vec::with_capacity(pipeline.model.arity());
    let mut rows = 0;
    for spec in &pipeline.features {
        inputs.push(exact_aggregate(&pipeline.dataset, spec, request)?);
        rows += spec.bind(&pipeline.dataset, request)?.population();
    }
    inputs.extend(pipeline.passthrough_values(request)?);
    let prediction = pipeline.model.predict(&inputs)?;
    Ok(ExactReport {
        id: request.id,
        prediction,
        rows_scanned: rows,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
