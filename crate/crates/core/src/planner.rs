//! Sample allocation: the initial plan, the best next direction, and plan
//! updates.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Relative tolerance for treating two ratios `I_j / (N_j − z_j)` as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Initial sampling ratio α.
    pub alpha: f64,
    /// Step size γ as a fraction of all population rows.
    pub gamma: f64,
    /// Floor on the initial per-feature sample.
    pub min_initial: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            gamma: 0.01,
            min_initial: 2,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha = {} outside (0, 1]", self.alpha)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma = {} outside (0, 1]", self.gamma)));
        }
        Ok(())
    }

    /// `γ_abs = ceil(γ · Σ N_j)`, at least 1.
    pub fn step_size(&self, population: &[usize]) -> usize {
        let total: usize = population.iter().sum();
        ((self.gamma * total as f64).ceil() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApproximationPlan {
    z: Vec<usize>,
    population: Vec<usize>,
}

impl ApproximationPlan {
    pub fn new(z: Vec<usize>, population: Vec<usize>) -> Result<Self> {
        if z.len() != population.len() {
            return Err(Error::LengthMismatch(format!(
                "{} sample sizes for {} populations",
                z.len(),
                population.len()
            )));
        }
        if let Some(j) = (0..z.len()).find(|&j| z[j] > population[j]) {
            return Err(Error::Invariant(format!(
                "feature {j}: sample size {} exceeds population {}",
                z[j], population[j]
            )));
        }
        Ok(Self { z, population })
    }

    pub fn z(&self) -> &[usize] {
        &self.z
    }

    pub fn population(&self) -> &[usize] {
        &self.population
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Total samples `‖z‖₁`.
    pub fn cost(&self) -> usize {
        self.z.iter().sum()
    }

    /// Upper bound on loop iterations from this plan's shape: every step
    /// either adds `step` samples or exhausts one feature.
    pub fn iteration_bound(&self, step: usize) -> usize {
        self.population.iter().sum::<usize>().div_ceil(step.max(1)) + self.len() + 1
    }

    pub fn is_exhausted(&self) -> bool {
        self.z.iter().zip(&self.population).all(|(z, n)| z == n)
    }
}

/// Features selected for the next batch of samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Direction(pub Vec<bool>);

impl Direction {
    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&d| d)
    }

    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &d)| d).map(|(j, _)| j)
    }
}

/// `z_j = min(N_j, max(min_initial, ceil(α N_j)))`.
pub fn initial_plan(population: &[usize], config: &PlannerConfig) -> ApproximationPlan {
    let z = population
        .iter()
        .map(|&n| {
            let scaled = (config.alpha * n as f64).ceil() as usize;
            scaled.max(config.min_initial).min(n)
        })
        .collect();
    ApproximationPlan {
        z,
        population: population.to_vec(),
    }
}

/// Per-feature ratio `I_j / (N_j − z_j)`; `None` for exhausted features.
pub fn ratios(indices: &[f64], plan: &ApproximationPlan) -> Vec<Option<f64>> {
    plan.z
        .iter()
        .zip(&plan.population)
        .zip(indices)
        .map(|((&z, &n), &i)| (z < n).then(|| i / (n - z) as f64))
        .collect()
}

/// Maximizes `Σ_j r_j Δz_j / ‖Δz‖₁` over non-empty directions.
///
/// The maximum equals `max_j r_j` and is attained by any subset of the
/// argmax set; every feature within [`TIE_TOLERANCE`] of the maximum is
/// selected. An empty direction means every feature is exhausted.
pub fn next_direction(indices: &[f64], plan: &ApproximationPlan) -> Result<Direction> {
    if indices.len() != plan.len() {
        return Err(Error::LengthMismatch(format!(
            "{} importance indices for {} features",
            indices.len(),
            plan.len()
        )));
    }
    let r = ratios(indices, plan);
    let best = r.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return Ok(Direction(vec![false; plan.len()]));
    }
    let cut = best - TIE_TOLERANCE * best.abs();
    Ok(Direction(r.iter().map(|v| matches!(v, Some(x) if *x >= cut)).collect()))
}

/// Objective value of a direction, used to compare against exhaustive search.
pub fn direction_objective(indices: &[f64], plan: &ApproximationPlan, direction: &Direction) -> f64 {
    let r = ratios(indices, plan);
    let mut sum = 0.0;
    let mut count = 0usize;
    for j in direction.selected() {
        if let Some(v) = r[j] {
            sum += v;
            count += 1;
        }
    }
    if count == 0 {
        f64::NEG_INFINITY
    } else {
        sum / count as f64
    }
}

/// `z'_j = min(N_j, z_j + γ_abs Δz_j)`.
pub fn apply_step(plan: &ApproximationPlan, direction: &Direction, step: usize) -> Result<ApproximationPlan> {
    if direction.0.len() != plan.len() {
        return Err(Error::LengthMismatch(format!(
            "direction over {} features, plan has {}",
            direction.0.len(),
            plan.len()
        )));
    }
    if step == 0 {
        return Err(Error::Config("step size must be at least one sample".into()));
    }
    let z = plan
        .z
        .iter()
        .zip(&plan.population)
        .zip(&direction.0)
        .map(|((&z, &n), &d)| if d { (z + step).min(n) } else { z })
        .collect();
    Ok(ApproximationPlan {
        z,
        population: plan.population.clone(),
    })
}
