//! Pipeline files, request logs, replay reports, synthetic workloads, and
//! the line-protocol server behind the command-line tool.

pub mod replay;
pub mod requests;
pub mod serve;
pub mod spec;
pub mod synth;

pub use replay::{replay, summarize, ReplayReport, ReplaySummary, RequestOutcome, TimingSummary};
pub use requests::{load_requests, write_requests};
pub use serve::{respond, serve_lines, serve_tcp};
pub use spec::{build_pipeline, holdout_mae, load_pipeline, DeltaPolicy, LoadedPipeline, PipelineSpec};
pub use synth::{adversarial_median, synthesize, write_workload, ModelKind, SynthConfig, SynthManifest, SynthWorkload};
