//! Feature estimates and their error distributions.
//!
//! Distributive and algebraic operators (SUM, COUNT, AVG, VAR, STD) get a
//! zero-mean normal error with a finite-population-corrected closed-form
//! sigma. MEDIAN and QUANTILE use an empirical bootstrap of the drawn
//! sample. A sample that covers the whole partition is exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::{self, Execution};
use crate::stats::{mix_seed, quantile_select, quantile_sorted};
use crate::store::{aggregate_values, FeatureSampleState, Operator};
use crate::{Error, Result};

/// Sample standard deviation below which STD collapses to a point mass.
const STD_FLOOR: f64 = 1e-12;

pub const DEFAULT_BOOTSTRAP_B: usize = 200;
pub const MIN_BOOTSTRAP_B: usize = 10;

/// Error distribution `U_x` of an approximate feature (true minus estimate).
#[derive(Debug, Clone, PartialEq)]
pub enum UncertaintyDist {
    Normal { mu: f64, sigma: f64 },
    /// Sorted bootstrap deltas.
    Empirical { deltas: Vec<f64> },
    PointMass,
}

impl UncertaintyDist {
    /// Zero-mean normal; a zero sigma collapses to [`UncertaintyDist::PointMass`].
    pub fn normal(sigma: f64) -> Self {
        if sigma > 0.0 && sigma.is_finite() {
            UncertaintyDist::Normal { mu: 0.0, sigma }
        } else {
            UncertaintyDist::PointMass
        }
    }

    /// Sorts the deltas; all-zero deltas collapse to a point mass.
    pub fn empirical(mut deltas: Vec<f64>) -> Self {
        if deltas.iter().all(|d| *d == 0.0) {
            return UncertaintyDist::PointMass;
        }
        deltas.sort_by(f64::total_cmp);
        UncertaintyDist::Empirical { deltas }
    }

    pub fn is_point_mass(&self) -> bool {
        match self {
            UncertaintyDist::PointMass => true,
            UncertaintyDist::Normal { sigma, .. } => *sigma == 0.0,
            UncertaintyDist::Empirical { deltas } => deltas.iter().all(|d| *d == 0.0),
        }
    }

    /// Error quantile at `u ∈ (0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            UncertaintyDist::Normal { mu, sigma } => mu + sigma * crate::qmc::inverse_normal_cdf_unchecked(u),
            UncertaintyDist::Empirical { deltas } => quantile_sorted(deltas, u),
            UncertaintyDist::PointMass => 0.0,
        }
    }

    /// Standard deviation of the error.
    pub fn spread(&self) -> f64 {
        match self {
            UncertaintyDist::Normal { sigma, .. } => *sigma,
            UncertaintyDist::Empirical { deltas } => crate::stats::population_variance(deltas).sqrt(),
            UncertaintyDist::PointMass => 0.0,
        }
    }
}

/// Approximate feature value `x̂` with its uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEstimate {
    pub feature_id: String,
    pub value: f64,
    pub uncertainty: UncertaintyDist,
    pub n: usize,
    pub population: usize,
}

impl FeatureEstimate {
    /// A known value (pass-through feature or exhausted sample).
    pub fn exact(feature_id: impl Into<String>, value: f64, population: usize) -> Self {
        Self {
            feature_id: feature_id.into(),
            value,
            uncertainty: UncertaintyDist::PointMass,
            n: population,
            population,
        }
    }

    pub fn is_point_mass(&self) -> bool {
        self.uncertainty.is_point_mass()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EstimatorConfig {
    pub bootstrap_b: usize,
    /// Also bootstrap the closed-form operators and log the divergence.
    pub cross_check: bool,
    pub exec: Execution,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            bootstrap_b: DEFAULT_BOOTSTRAP_B,
            cross_check: false,
            exec: Execution::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bootstrap_b < MIN_BOOTSTRAP_B {
            return Err(Error::Config(format!(
                "bootstrap replicate count {} below {MIN_BOOTSTRAP_B}",
                self.bootstrap_b
            )));
        }
        Ok(())
    }
}

/// Estimates the feature from the current sample.
pub fn estimate(state: &FeatureSampleState<'_>, config: &EstimatorConfig) -> Result<FeatureEstimate> {
    config.validate()?;
    if let Some(exact) = exhausted(state) {
        return Ok(exact);
    }
    let op = state.op();
    if op.is_holistic() {
        return bootstrap_estimate(state, config);
    }
    check_sample_size(state)?;

    let n = state.drawn() as f64;
    let big_n = state.population() as f64;
    let fpc = (big_n - n) / big_n;
    let mom = state.moments();
    let matched = state.matched_count();

    let (value, sigma) = match op {
        Operator::Count => {
            let p = matched as f64 / n;
            (big_n * p, big_n * (p * (1.0 - p) / n * fpc).max(0.0).sqrt())
        }
        Operator::Sum if state.has_predicate() => {
            // y_i = v_i · 1{match} over every drawn row
            let p = matched as f64 / n;
            let mean_y = p * mom.mean;
            let sum_sq = mom.m2 + matched as f64 * mom.mean * mom.mean;
            let var_y = ((sum_sq - n * mean_y * mean_y) / (n - 1.0)).max(0.0);
            (big_n * mean_y, big_n * (var_y / n * fpc).sqrt())
        }
        Operator::Sum => {
            let sigma_avg = (mom.sample_variance() / n * fpc).sqrt();
            (big_n * mom.mean, big_n * sigma_avg)
        }
        Operator::Avg | Operator::Var | Operator::Std if matched < 2 => {
            log::warn!(
                "feature `{}`: {matched} matching rows in a sample of {n}; treating {} as exact",
                state.feature_id(),
                op.name()
            );
            let v = aggregate_values(op, state.matched_values());
            return Ok(point(state, v));
        }
        Operator::Avg => {
            let m = matched as f64;
            (mom.mean, (mom.sample_variance() / m * fpc).sqrt())
        }
        Operator::Var | Operator::Std => {
            let m = matched as f64;
            let s2 = mom.sample_variance();
            let sigma_var = ((mom.fourth_central() - s2 * s2) / m * fpc).max(0.0).sqrt();
            if op == Operator::Var {
                (s2, sigma_var)
            } else {
                let s = s2.sqrt();
                if s <= STD_FLOOR {
                    return Ok(point(state, 0.0));
                }
                (s, sigma_var / (2.0 * s))
            }
        }
        Operator::Median | Operator::Quantile(_) => unreachable!("holistic handled above"),
    };

    if config.cross_check {
        let boot = bootstrap_spread(state, config);
        log::debug!(
            "feature `{}` ({}): closed-form sigma {sigma:.6e}, bootstrap spread {boot:.6e}, ratio {:.3}",
            state.feature_id(),
            op.name(),
            if sigma > 0.0 { boot / sigma } else { f64::NAN }
        );
    }

    Ok(FeatureEstimate {
        feature_id: state.feature_id().to_string(),
        value,
        uncertainty: UncertaintyDist::normal(sigma),
        n: state.drawn(),
        population: state.population(),
    })
}

/// Empirical-bootstrap estimate for MEDIAN and QUANTILE.
///
/// `x̂` is the operator on the drawn matching values; each of the `B`
/// replicates resamples them with replacement and records
/// `operator(resample) − x̂`.
pub fn bootstrap_estimate(state: &FeatureSampleState<'_>, config: &EstimatorConfig) -> Result<FeatureEstimate> {
    config.validate()?;
    let op = state.op();
    let Some(q) = op.quantile_level() else {
        return Err(Error::Config(format!(
            "bootstrap estimation applies to median/quantile, not {}",
            op.name()
        )));
    };
    if let Some(exact) = exhausted(state) {
        return Ok(exact);
    }
    check_sample_size(state)?;
    let sample = state.matched_values();
    if sample.len() < 2 {
        log::warn!(
            "feature `{}`: {} matching rows; treating {} as exact",
            state.feature_id(),
            sample.len(),
            op.name()
        );
        return Ok(point(state, aggregate_values(op, sample)));
    }
    let value = quantile_select(&mut sample.to_vec(), q);
    let deltas = replicates(state, config, |resample| quantile_select(resample, q) - value);
    Ok(FeatureEstimate {
        feature_id: state.feature_id().to_string(),
        value,
        uncertainty: UncertaintyDist::empirical(deltas),
        n: state.drawn(),
        population: state.population(),
    })
}

/// Standard deviation of the bootstrapped point estimator for any operator.
/// Diagnostic only: compares against the closed-form sigma.
pub fn bootstrap_spread(state: &FeatureSampleState<'_>, config: &EstimatorConfig) -> f64 {
    let op = state.op();
    let big_n = state.population() as f64;
    let drawn = state.drawn();
    let has_predicate = state.has_predicate();
    // Resample over all drawn rows; non-matching rows are NaN-tagged.
    let rows: Vec<f64> = state
        .drawn_values()
        .iter()
        .zip(state.drawn_matches())
        .map(|(&v, &hit)| if hit { v } else { f64::NAN })
        .collect();
    let reps = replicates_over(&rows, state.seed(), drawn, config, |resample| {
        let matched: Vec<f64> = resample.iter().copied().filter(|v| !v.is_nan()).collect();
        let p = matched.len() as f64 / resample.len() as f64;
        match op {
            Operator::Count => big_n * p,
            Operator::Sum if has_predicate => big_n * p * crate::stats::mean(&matched),
            Operator::Sum => big_n * crate::stats::mean(&matched),
            _ => aggregate_values(op, &matched),
        }
    });
    crate::stats::population_variance(&reps).sqrt()
}

fn replicates<F>(state: &FeatureSampleState<'_>, config: &EstimatorConfig, stat: F) -> Vec<f64>
where
    F: Fn(&mut [f64]) -> f64 + Sync + Send,
{
    replicates_over(state.matched_values(), state.seed(), state.drawn(), config, stat)
}

fn replicates_over<F>(sample: &[f64], seed: u64, drawn: usize, config: &EstimatorConfig, stat: F) -> Vec<f64>
where
    F: Fn(&mut [f64]) -> f64 + Sync + Send,
{
    let len = sample.len();
    exec::map_indices(config.exec, config.bootstrap_b, |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, drawn as u64, b as u64]));
        let mut resample: Vec<f64> = (0..len).map(|_| sample[rng.random_range(0..len)]).collect();
        stat(&mut resample)
    })
}

fn exhausted(state: &FeatureSampleState<'_>) -> Option<FeatureEstimate> {
    let ordered = state.row_ordered_matches()?;
    Some(point(state, aggregate_values(state.op(), &ordered)))
}

fn point(state: &FeatureSampleState<'_>, value: f64) -> FeatureEstimate {
    FeatureEstimate {
        feature_id: state.feature_id().to_string(),
        value,
        uncertainty: UncertaintyDist::PointMass,
        n: state.drawn(),
        population: state.population(),
    }
}

fn check_sample_size(state: &FeatureSampleState<'_>) -> Result<()> {
    if state.drawn() < 2 {
        return Err(Error::Invariant(format!(
            "feature `{}` estimated from {} rows (N = {})",
            state.feature_id(),
            state.drawn(),
            state.population()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{AggregationSpec, Column, ColumnData, Dataset, RequestRecord, Table};

    fn dataset(values: Vec<f64>) -> Dataset {
        let t = Table::new("t", vec![Column::new("v", ColumnData::Float64(values))], None).unwrap();
        Dataset::new(vec![t]).unwrap()
    }

    fn spec(op: Operator) -> AggregationSpec {
        AggregationSpec {
            feature_id: "f".into(),
            table: "t".into(),
            column: Some("v".into()),
            op,
            predicate: vec![],
            partition: None,
        }
    }

    fn est(ds: &Dataset, op: Operator, n: usize, seed: u64) -> FeatureEstimate {
        let mut s = FeatureSampleState::open(ds, &spec(op), &RequestRecord::new(0), seed).unwrap();
        s.draw_to(n);
        estimate(&s, &EstimatorConfig::default()).unwrap()
    }

    #[test]
    fn full_sample_is_point_mass() {
        let ds = dataset((1..=100).map(f64::from).collect());
        let e = est(&ds, Operator::Avg, 100, 1);
        assert_eq!(e.value, 50.5);
        assert_eq!(e.uncertainty, UncertaintyDist::PointMass);
    }

    #[test]
    fn sum_scales_by_population() {
        let ds = dataset(vec![2.0, 4.0, 6.0, 2.0, 4.0, 6.0]);
        let state = (0..)
            .map(|seed| {
                let mut s = FeatureSampleState::open(&ds, &spec(Operator::Sum), &RequestRecord::new(0), seed).unwrap();
                s.draw_to(3);
                s
            })
            .find(|s| {
                let mut v = s.drawn_values().to_vec();
                v.sort_by(f64::total_cmp);
                v == [2.0, 4.0, 6.0]
            })
            .unwrap();
        let e = estimate(&state, &EstimatorConfig::default()).unwrap();
        assert_eq!(e.value, 24.0);
    }

    #[test]
    fn precondition_violation_below_two_rows() {
        let ds = dataset(vec![1.0, 2.0, 3.0]);
        let mut s = FeatureSampleState::open(&ds, &spec(Operator::Avg), &RequestRecord::new(0), 3).unwrap();
        s.draw_to(1);
        assert!(matches!(estimate(&s, &EstimatorConfig::default()), Err(Error::Invariant(_))));
    }

    #[test]
    fn bootstrap_rejects_small_b() {
        let ds = dataset(vec![1.0, 2.0, 3.0]);
        let mut s = FeatureSampleState::open(&ds, &spec(Operator::Median), &RequestRecord::new(0), 3).unwrap();
        s.draw_to(2);
        let cfg = EstimatorConfig { bootstrap_b: 9, ..Default::default() };
        assert!(matches!(bootstrap_estimate(&s, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn constant_sample_median_is_point_mass() {
        let ds = dataset(vec![7.0; 50]);
        let e = est(&ds, Operator::Median, 10, 9);
        assert_eq!(e.value, 7.0);
        assert!(e.is_point_mass());
    }

    #[test]
    fn std_near_zero_collapses() {
        let ds = dataset(vec![3.0; 40]);
        let e = est(&ds, Operator::Std, 10, 2);
        assert_eq!(e.value, 0.0);
        assert!(e.is_point_mass());
    }

    #[test]
    fn var_uses_fourth_moment() {
        let values: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 10.0).collect();
        let ds = dataset(values);
        let mut s = FeatureSampleState::open(&ds, &spec(Operator::Var), &RequestRecord::new(0), 11).unwrap();
        s.draw_to(200);
        let e = estimate(&s, &EstimatorConfig::default()).unwrap();
        // independent two-pass recomputation
        let x = s.drawn_values();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let s2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
        let sigma = ((m4 - s2 * s2) / n * (800.0 / 1000.0)).sqrt();
        assert!((e.value - s2).abs() <= 1e-9 * s2);
        match e.uncertainty {
            UncertaintyDist::Normal { mu, sigma: got } => {
                assert_eq!(mu, 0.0);
                assert!((got - sigma).abs() <= 1e-9 * sigma);
            }
            other => panic!("{other:?}"),
        }
        let std = est(&ds, Operator::Std, 200, 11);
        assert!((std.value - s2.sqrt()).abs() < 1e-9);
        assert!((std.uncertainty.spread() - sigma / (2.0 * s2.sqrt())).abs() < 1e-9);
    }

    #[test]
    fn empirical_quantile_of_deltas() {
        let u = UncertaintyDist::empirical(vec![1.0, -1.0, 0.0]);
        assert_eq!(u.quantile(0.5), 0.0);
        assert_eq!(u.quantile(0.75), 0.5);
    }

    #[test]
    fn cross_check_spread_is_close_for_avg() {
        let values: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 10_007) as f64).collect();
        let ds = dataset(values);
        let mut s = FeatureSampleState::open(&ds, &spec(Operator::Avg), &RequestRecord::new(0), 4).unwrap();
        s.draw_to(500);
        let cfg = EstimatorConfig { bootstrap_b: 400, cross_check: true, ..Default::default() };
        let e = estimate(&s, &cfg).unwrap();
        let boot = bootstrap_spread(&s, &cfg);
        // bootstrap ignores the finite-population correction (fpc = 0.95)
        let ratio = boot / e.uncertainty.spread();
        assert!((0.85..1.25).contains(&ratio), "ratio {ratio}");
    }
}
