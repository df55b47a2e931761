//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always print; exits non-zero if any check fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use aqp_infer::engine::{serve_request, Pipeline, RequestConfig};
use aqp_infer::estimate::{bootstrap_estimate, estimate, EstimatorConfig, FeatureEstimate, UncertaintyDist};
use aqp_infer::exec::Execution;
use aqp_infer::harness::{adversarial_median, replay, synthesize, ModelKind, ReplayReport, SynthConfig};
use aqp_infer::importance::main_effect_indices;
use aqp_infer::model::{Linear, ModelArtifact, ModelBody, Task};
use aqp_infer::planner::{direction_objective, next_direction, ApproximationPlan, Direction};
use aqp_infer::propagate::propagate;
use aqp_infer::qmc::{build_saltelli, build_saltelli_from, Marginal, SobolGenerator};
use aqp_infer::stats::{quantile_sorted, splitmix64};
use aqp_infer::store::{
    exact_aggregate, AggregationSpec, CmpOp, Column, ColumnData, Condition, Dataset, FeatureSampleState, Operand,
    Operator, RequestRecord, Scalar, Table,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, pass: bool, detail: String, elapsed: Duration) {
        if !pass {
            self.failures += 1;
        }
        println!(
            "criterion {id:>2}: {} ({detail}; {:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
}

fn regression_config() -> SynthConfig {
    SynthConfig {
        features: 3,
        rows_per_group: 100_000,
        groups: 40,
        requests: 500,
        model: ModelKind::Gbdt,
        task: Task::Regression,
        classes: 2,
        resilience: 1.0,
        noise: 0.2,
        holdout_per_group: 25,
        seed: 11,
    }
}

fn classification_config() -> SynthConfig {
    SynthConfig {
        features: 8,
        rows_per_group: 20_000,
        groups: 30,
        requests: 300,
        model: ModelKind::Gbdt,
        task: Task::Classification,
        classes: 3,
        resilience: 1.0,
        noise: 0.0,
        holdout_per_group: 0,
        seed: 12,
    }
}

fn defaults(delta: f64, tau: f64) -> RequestConfig {
    RequestConfig {
        delta,
        tau,
        seed: 7,
        ..RequestConfig::default()
    }
}

fn mean_rows(pipeline: &Pipeline, requests: &[RequestRecord], config: &RequestConfig) -> f64 {
    let total: usize = requests
        .iter()
        .map(|r| serve_request(pipeline, r, config).expect("serve").rows_scanned)
        .sum();
    total as f64 / requests.len() as f64
}

struct Uniform(f64, f64);

impl Marginal for Uniform {
    fn quantile(&self, u: f64) -> f64 {
        self.0 + (self.1 - self.0) * u
    }
    fn is_constant(&self) -> bool {
        false
    }
    fn center(&self) -> f64 {
        0.5 * (self.0 + self.1)
    }
}

fn ishigami(x: &[f64]) -> f64 {
    x[0].sin() + 7.0 * x[1].sin().powi(2) + 0.1 * x[2].powi(4) * x[0].sin()
}

fn linear_variance(m: usize) -> (f64, f64) {
    let w = [1.0, 2.0, -0.5];
    let sigma = [1.0, 0.5, 2.0];
    let model = ModelArtifact::new(
        Task::Regression,
        3,
        Vec::new(),
        ModelBody::Linear(Linear {
            weights: w.to_vec(),
            bias: 0.3,
        }),
    )
    .expect("model");
    let estimates: Vec<FeatureEstimate> = sigma
        .iter()
        .enumerate()
        .map(|(j, &s)| FeatureEstimate {
            feature_id: format!("x{j}"),
            value: j as f64,
            uncertainty: UncertaintyDist::normal(s),
            n: 10,
            population: 100,
        })
        .collect();
    let mut gen = SobolGenerator::new(6).expect("generator");
    let q = build_saltelli(&mut gen, m, &estimates).expect("matrices");
    let (outcome, _) = propagate(&model, &estimates, &q, Execution::Parallel).expect("propagate");
    let analytic: f64 = w.iter().zip(&sigma).map(|(w, s)| w * w * s * s).sum();
    (outcome.stats.variance, analytic)
}

fn population_table(n: usize) -> (Dataset, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let dist = LogNormal::new(1.0, 0.6).expect("lognormal");
    let v: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
    let table = Table::new("pop", vec![Column::new("v", ColumnData::Float64(v.clone()))], None).expect("table");
    (Dataset::new(vec![table]).expect("dataset"), v)
}

fn spec(op: Operator, predicate: bool) -> AggregationSpec {
    AggregationSpec {
        feature_id: format!("pop_{}", op.name()),
        table: "pop".into(),
        column: Some("v".into()),
        op,
        predicate: if predicate {
            vec![Condition {
                column: "v".into(),
                op: CmpOp::Gt,
                operand: Operand::Value { value: Scalar::Num(3.0) },
            }]
        } else {
            Vec::new()
        },
        partition: None,
    }
}

struct RegressionRun {
    workload: aqp_infer::harness::SynthWorkload,
    pipeline: Pipeline,
    replay: ReplayReport,
}

fn criterion_1(report: &mut Report) -> RegressionRun {
    let start = Instant::now();
    let workload = synthesize(&regression_config()).expect("synthesize");
    let pipeline = workload.pipeline().expect("pipeline");
    let config = defaults(workload.delta, 0.95);
    let rep = replay(&pipeline, &workload.requests, &config, true).expect("replay");
    let s = &rep.summary;
    let elapsed = start.elapsed();
    report.line(
        1,
        s.coverage >= 0.93 && elapsed < Duration::from_secs(300),
        format!("coverage {:.4} >= 0.93 at delta {:.4}, {} requests", s.coverage, workload.delta, s.requests),
        elapsed,
    );
    RegressionRun {
        workload,
        pipeline,
        replay: rep,
    }
}

fn criterion_3(report: &mut Report, run: &RegressionRun) {
    let s = &run.replay.summary;
    report.line(
        3,
        s.mean_rows_fraction <= 0.30 && s.rows_speedup >= 3.0,
        format!(
            "mean rows fraction {:.4} <= 0.30, exact/approx rows {:.2} >= 3",
            s.mean_rows_fraction, s.rows_speedup
        ),
        Duration::ZERO,
    );
}

fn criterion_4(report: &mut Report, run: &RegressionRun, classification: &ReplayReport) {
    let s = &run.replay.summary;
    let c = &classification.summary;
    report.line(
        4,
        s.mean_iterations < 5.0 && c.mean_iterations < 5.0,
        format!(
            "mean iterations {:.3} (regression), {:.3} (classification) < 5",
            s.mean_iterations, c.mean_iterations
        ),
        Duration::ZERO,
    );
}

fn criterion_9(report: &mut Report, run: &RegressionRun) {
    let start = Instant::now();
    let (pipeline, workload) = (&run.pipeline, &run.workload);
    let requests = &workload.requests;
    let taus = [0.5, 0.9, 0.95, 0.99];
    let by_tau: Vec<f64> = taus
        .iter()
        .map(|&t| mean_rows(pipeline, requests, &defaults(workload.delta, t)))
        .collect();
    let deltas = [0.5, 1.0, 2.0, 4.0].map(|f| f * workload.delta);
    let by_delta: Vec<f64> = deltas
        .iter()
        .map(|&d| mean_rows(pipeline, requests, &defaults(d, 0.95)))
        .collect();
    let tau_ok = by_tau.windows(2).all(|w| w[1] >= w[0] * 0.98);
    let delta_ok = by_delta.windows(2).all(|w| w[1] <= w[0] * 1.02);
    report.line(
        9,
        tau_ok && delta_ok,
        format!(
            "mean rows by tau {:?}: {:?}; by delta x[0.5, 1, 2, 4]: {:?}",
            taus,
            by_tau.iter().map(|v| v.round()).collect::<Vec<_>>(),
            by_delta.iter().map(|v| v.round()).collect::<Vec<_>>()
        ),
        start.elapsed(),
    );
}

fn criterion_2(report: &mut Report) -> ReplayReport {
    let start = Instant::now();
    let workload = synthesize(&classification_config()).expect("synthesize");
    let pipeline = workload.pipeline().expect("pipeline");
    let rep = replay(&pipeline, &workload.requests, &defaults(0.0, 0.95), true).expect("replay");
    let elapsed = start.elapsed();
    report.line(
        2,
        rep.summary.coverage >= 0.93 && elapsed < Duration::from_secs(300),
        format!(
            "class agreement {:.4} >= 0.93, {} requests",
            rep.summary.coverage, rep.summary.requests
        ),
        elapsed,
    );
    rep
}

fn criterion_5(report: &mut Report) {
    let start = Instant::now();
    let inputs = [Uniform(-PI, PI), Uniform(-PI, PI), Uniform(-PI, PI)];
    let refs: Vec<&dyn Marginal> = inputs.iter().map(|u| u as &dyn Marginal).collect();
    let mut gen = SobolGenerator::new(6).expect("generator");
    let q = build_saltelli_from(&mut gen, 1 << 13, &refs).expect("matrices");
    let eval = |m: &aqp_infer::Matrix| m.iter_rows().map(ishigami).collect::<Vec<f64>>();
    let f_a = eval(&q.a);
    let f_b = eval(&q.b);
    let f_ab: Vec<Vec<f64>> = q.ab.iter().map(eval).collect();
    let iv = main_effect_indices(&f_a, &f_b, &f_ab, &q.varying, 3).expect("indices");
    // V = a²/8 + b π⁴/5 + b² π⁸/18 + 1/2; V1 = (1 + b π⁴/5)²/2; V2 = a²/8; V3 = 0.
    let (a, b) = (7.0f64, 0.1f64);
    let v = a * a / 8.0 + b * PI.powi(4) / 5.0 + b * b * PI.powi(8) / 18.0 + 0.5;
    let analytic = [(1.0 + b * PI.powi(4) / 5.0).powi(2) / 2.0 / v, a * a / 8.0 / v, 0.0];
    let worst = iv
        .indices
        .iter()
        .zip(&analytic)
        .map(|(e, t)| (e - t).abs())
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    report.line(
        5,
        worst <= 0.02 && elapsed < Duration::from_secs(10),
        format!(
            "I = [{:.4}, {:.4}, {:.4}] vs [{:.4}, {:.4}, 0], max error {worst:.4} <= 0.02",
            iv.indices[0], iv.indices[1], iv.indices[2], analytic[0], analytic[1]
        ),
        elapsed,
    );
}

fn criterion_6(report: &mut Report) {
    let start = Instant::now();
    let (v1000, truth) = linear_variance(1000);
    let (v16k, _) = linear_variance(1 << 14);
    let e1 = (v1000 - truth).abs() / truth;
    let e2 = (v16k - truth).abs() / truth;
    report.line(
        6,
        e1 <= 0.05 && e2 <= 0.01,
        format!("relative error {e1:.4} <= 0.05 at m=1000, {e2:.4} <= 0.01 at m=16384 (Var = {truth})"),
        start.elapsed(),
    );
}

fn criterion_7(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut mismatches = 0;
    for _ in 0..200 {
        let k = rng.random_range(1..=12);
        let indices: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let z: Vec<usize> = (0..k).map(|_| rng.random_range(0..1000)).collect();
        let n: Vec<usize> = z
            .iter()
            .map(|&z| if rng.random_bool(0.15) { z } else { z + rng.random_range(1..1000) })
            .collect();
        let plan = ApproximationPlan::new(z, n).expect("plan");
        let d = next_direction(&indices, &plan).expect("direction");
        let mut best = f64::NEG_INFINITY;
        for mask in 1u32..(1 << k) {
            let cand = Direction((0..k).map(|j| mask >> j & 1 == 1).collect());
            if cand.selected().any(|j| plan.z()[j] == plan.population()[j]) {
                continue;
            }
            best = best.max(direction_objective(&indices, &plan, &cand));
        }
        let got = if d.is_empty() { f64::NEG_INFINITY } else { direction_objective(&indices, &plan, &d) };
        if got != best {
            mismatches += 1;
        }
    }
    report.line(
        7,
        mismatches == 0,
        format!("{mismatches} of 200 instances differ from exhaustive search"),
        start.elapsed(),
    );
}

fn criterion_8(report: &mut Report) {
    let start = Instant::now();
    let (dataset, _) = population_table(10_000);
    let request = RequestRecord::new(1);
    let config = EstimatorConfig::default();
    let trials = 10_000;
    let mut details = Vec::new();
    let mut pass = true;
    for (op, predicate) in [(Operator::Avg, false), (Operator::Sum, false), (Operator::Count, true)] {
        let s = spec(op, predicate);
        let truth = exact_aggregate(&dataset, &s, &request).expect("exact");
        let mut values = Vec::with_capacity(trials);
        let mut sigmas = Vec::with_capacity(trials);
        for t in 0..trials {
            let mut state = FeatureSampleState::open(&dataset, &s, &request, splitmix64(t as u64)).expect("state");
            state.draw_to(100);
            let e = estimate(&state, &config).expect("estimate");
            values.push(e.value);
            sigmas.push(e.uncertainty.spread());
        }
        let mean = values.iter().sum::<f64>() / trials as f64;
        let spread = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt();
        let se = spread / (trials as f64).sqrt();
        let sigma = sigmas.iter().sum::<f64>() / trials as f64;
        let unbiased = (mean - truth).abs() <= 3.0 * se;
        let calibrated = (sigma - spread).abs() <= 0.1 * spread;
        pass &= unbiased && calibrated;
        details.push(format!(
            "{}: |bias|/se {:.2}, sigma/spread {:.3}",
            op.name(),
            (mean - truth).abs() / se,
            sigma / spread
        ));
    }
    report.line(8, pass, details.join("; "), start.elapsed());
}

fn criterion_10(report: &mut Report) {
    let start = Instant::now();
    let rows = 20_001;
    let survey = 20;
    let workload = adversarial_median(rows, 1.0, survey, 3).expect("workload");
    let pipeline = workload.pipeline().expect("pipeline");
    let exact = workload.exact_features(0).expect("exact")[0];
    let config = defaults(workload.delta, 0.95);
    let serve = |i: usize| {
        let rep = serve_request(&pipeline, &workload.requests[i], &config).expect("serve");
        (rep.prediction.as_scalar(), rep.features[0].n)
    };
    // The criterion is about one request; the rest of the log is reported
    // because each request runs dozens of sequential checks, and a rare
    // lopsided sample can pass one of them early.
    let (value, n) = serve(0);
    let pass = value == exact && n == rows;
    let full = (1..survey).filter(|&i| serve(i).1 == rows).count();
    report.line(
        10,
        pass,
        format!(
            "exact median {exact}, served {value} after {n} of N = {rows} rows; \
             {full}/{} other requests also scanned everything",
            survey - 1
        ),
        start.elapsed(),
    );
}

fn criterion_11(report: &mut Report) {
    let start = Instant::now();
    let (dataset, values) = population_table(100_000);
    let mut sorted = values;
    sorted.sort_by(f64::total_cmp);
    let truth = quantile_sorted(&sorted, 0.5);
    let s = spec(Operator::Median, false);
    let request = RequestRecord::new(1);
    let config = EstimatorConfig::default();
    let trials = 1000;
    let mut covered = 0;
    for t in 0..trials {
        let mut state = FeatureSampleState::open(&dataset, &s, &request, 1000 + t as u64).expect("state");
        state.draw_to(400);
        let e = bootstrap_estimate(&state, &config).expect("bootstrap");
        let lo = e.value + e.uncertainty.quantile(0.025);
        let hi = e.value + e.uncertainty.quantile(0.975);
        if lo <= truth && truth <= hi {
            covered += 1;
        }
    }
    let rate = covered as f64 / trials as f64;
    report.line(
        11,
        (rate - 0.95).abs() <= 0.03,
        format!("true median inside the central 95% interval in {rate:.3} of {trials} trials"),
        start.elapsed(),
    );
}

fn main() -> ExitCode {
    let mut report = Report { failures: 0 };
    let regression = criterion_1(&mut report);
    let classification = criterion_2(&mut report);
    criterion_3(&mut report, &regression);
    criterion_4(&mut report, &regression, &classification);
    criterion_5(&mut report);
    criterion_6(&mut report);
    criterion_7(&mut report);
    criterion_8(&mut report);
    criterion_9(&mut report, &regression);
    criterion_10(&mut report);
    criterion_11(&mut report);
    if report.failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{} criteria failed", report.failures);
        ExitCode::FAILURE
    }
}
