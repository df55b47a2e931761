//! Request replay against the approximate and exact engines.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::{exact_serve, serve_request, ExactReport, Pipeline, RequestConfig, ServeReport, TerminalMode};
use crate::exec::{map_slice, Execution};
use crate::model::Task;
use crate::store::RequestRecord;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestOutcome {
    pub serve: ServeReport,
    pub exact: ExactReport,
    /// |exact − served| for regression.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_error: Option<f64>,
    pub within_bound: bool,
    /// Rows scanned relative to the exact baseline.
    pub rows_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub requests: usize,
    pub coverage: f64,
    pub mean_rows_fraction: f64,
    pub rows_scanned: usize,
    pub exact_rows_scanned: usize,
    /// Exact rows over approximate rows.
    pub rows_speedup: f64,
    pub mean_iterations: f64,
    pub iteration_histogram: BTreeMap<usize, usize>,
    pub validated: usize,
    pub exact_fallback: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub mean_latency_s: f64,
    pub p95_latency_s: f64,
    pub exact_mean_latency_s: f64,
    pub exact_p95_latency_s: f64,
    /// Exact wall time over approximate wall time, summed over requests.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub pipeline: String,
    pub config: RequestConfig,
    pub summary: ReplaySummary,
    pub timing: TimingSummary,
    pub requests: Vec<RequestOutcome>,
}

impl ReplayReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The report with every timing field removed; stable across runs.
    pub fn to_json_without_timing(&self) -> String {
        let mut value = serde_json::to_value(self).expect("report serializes");
        strip_timing(&mut value);
        serde_json::to_string_pretty(&value).expect("value serializes")
    }

    /// Plain-text summary table.
    pub fn render_table(&self) -> String {
        let s = &self.summary;
        let t = &self.timing;
        let mut out = String::new();
        let _ = writeln!(out, "pipeline            {}", self.pipeline);
        let _ = writeln!(out, "requests            {}", s.requests);
        let _ = writeln!(out, "delta / tau         {} / {}", self.config.delta, self.config.tau);
        let _ = writeln!(out, "coverage            {:.4}", s.coverage);
        let _ = writeln!(out, "rows fraction       {:.4} (mean per request)", s.mean_rows_fraction);
        let _ = writeln!(out, "rows speedup        {:.2}x", s.rows_speedup);
        let _ = writeln!(out, "wall speedup        {:.2}x", t.speedup);
        let _ = writeln!(out, "latency mean / p95  {:.3} ms / {:.3} ms", t.mean_latency_s * 1e3, t.p95_latency_s * 1e3);
        let _ = writeln!(
            out,
            "exact  mean / p95   {:.3} ms / {:.3} ms",
            t.exact_mean_latency_s * 1e3,
            t.exact_p95_latency_s * 1e3
        );
        let _ = writeln!(out, "mean iterations     {:.3}", s.mean_iterations);
        let _ = writeln!(out, "terminal            {} validated, {} exact", s.validated, s.exact_fallback);
        let _ = writeln!(out, "iterations  requests");
        for (it, count) in &s.iteration_histogram {
            let _ = writeln!(out, "{it:>10}  {count}");
        }
        out
    }
}

fn strip_timing(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.remove("timing");
            map.remove("wall_time_s");
            map.values_mut().for_each(strip_timing);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

/// Serves every request approximately and exactly. With `parallel`,
/// requests run concurrently; results keep request order either way.
pub fn replay(pipeline: &Pipeline, requests: &[RequestRecord], config: &RequestConfig, parallel: bool) -> Result<ReplayReport> {
    config.validate(pipeline.task())?;
    let exec = if parallel { Execution::Parallel } else { Execution::Sequential };
    let outcomes = map_slice(exec, requests, |r| replay_one(pipeline, r, config))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplayReport {
        pipeline: pipeline.name.clone(),
        config: *config,
        summary: summarize(&outcomes),
        timing: timing(&outcomes),
        requests: outcomes,
    })
}

fn replay_one(pipeline: &Pipeline, request: &RequestRecord, config: &RequestConfig) -> Result<RequestOutcome> {
    let tag = |e: Error| match e {
        Error::Request { .. } => e,
        other => Error::Request {
            id: request.id,
            reason: other.to_string(),
        },
    };
    let exact = exact_serve(pipeline, request).map_err(tag)?;
    let serve = serve_request(pipeline, request, config).map_err(tag)?;
    let (abs_error, within_bound) = match pipeline.task() {
        Task::Regression => {
            let err = (exact.prediction.as_scalar() - serve.prediction.as_scalar()).abs();
            (Some(err), err <= config.delta)
        }
        Task::Classification => (None, exact.prediction.class() == serve.prediction.class()),
    };
    let rows_fraction = if exact.rows_scanned == 0 {
        1.0
    } else {
        serve.rows_scanned as f64 / exact.rows_scanned as f64
    };
    Ok(RequestOutcome {
        serve,
        exact,
        abs_error,
        within_bound,
        rows_fraction,
    })
}

/// Aggregates recomputed from per-request records.
pub fn summarize(outcomes: &[RequestOutcome]) -> ReplaySummary {
    let n = outcomes.len().max(1) as f64;
    let mut histogram = BTreeMap::new();
    for o in outcomes {
        *histogram.entry(o.serve.iterations).or_insert(0) += 1;
    }
    let rows: usize = outcomes.iter().map(|o| o.serve.rows_scanned).sum();
    let exact_rows: usize = outcomes.iter().map(|o| o.exact.rows_scanned).sum();
    let validated = outcomes
        .iter()
        .filter(|o| o.serve.terminal == TerminalMode::Validated)
        .count();
    ReplaySummary {
        requests: outcomes.len(),
        coverage: outcomes.iter().filter(|o| o.within_bound).count() as f64 / n,
        mean_rows_fraction: outcomes.iter().map(|o| o.rows_fraction).sum::<f64>() / n,
        rows_scanned: rows,
        exact_rows_scanned: exact_rows,
        rows_speedup: if rows == 0 { 1.0 } else { exact_rows as f64 / rows as f64 },
        mean_iterations: outcomes.iter().map(|o| o.serve.iterations as f64).sum::<f64>() / n,
        iteration_histogram: histogram,
        validated,
        exact_fallback: outcomes.len() - validated,
    }
}

fn timing(outcomes: &[RequestOutcome]) -> TimingSummary {
    let approx: Vec<f64> = outcomes.iter().map(|o| o.serve.wall_time_s).collect();
    let exact: Vec<f64> = outcomes.iter().map(|o| o.exact.wall_time_s).collect();
    let total_approx: f64 = approx.iter().sum();
    let total_exact: f64 = exact.iter().sum();
    TimingSummary {
        mean_latency_s: crate::stats::mean(&approx),
        p95_latency_s: p95(approx),
        exact_mean_latency_s: crate::stats::mean(&exact),
        exact_p95_latency_s: p95(exact),
        speedup: if total_approx > 0.0 { total_exact / total_approx } else { 1.0 },
    }
}

fn p95(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    crate::stats::quantile_sorted(&v, 0.95)
}
