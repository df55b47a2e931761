use std::fs;
use std::io::{self, BufReader, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use aqp_infer::engine::{exact_serve, RequestConfig};
use aqp_infer::exec::Execution;
use aqp_infer::harness::{
    load_pipeline, load_requests, replay, serve_lines, serve_tcp, synthesize, write_workload, LoadedPipeline,
    ModelKind, SynthConfig,
};
use aqp_infer::model::Task;
use aqp_infer::planner::PlannerConfig;

/// Approximate serving for ML pipelines with aggregation features.
#[derive(Parser)]
#[command(name = "aqp-infer", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a request log against the approximate and exact engines.
    Replay {
        pipeline: PathBuf,
        requests: PathBuf,
        /// Write the JSON report here; otherwise JSON goes to stdout and the table to stderr.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Serve newline-delimited JSON requests from stdin, or a TCP port.
    Serve {
        pipeline: PathBuf,
        #[arg(long)]
        port: Option<u16>,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Compute exact predictions for a request log (one JSON line each).
    Exact { pipeline: PathBuf, requests: PathBuf },
    /// Generate a synthetic dataset, model, pipeline, and request log.
    Synth(SynthArgs),
    /// Check a pipeline spec, and optionally a request log against it.
    Validate {
        pipeline: PathBuf,
        requests: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct Knobs {
    /// Initial sampling ratio.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Step size as a fraction of all partition rows.
    #[arg(long, default_value_t = 0.01)]
    gamma: f64,
    /// Confidence level.
    #[arg(long, default_value_t = 0.95)]
    tau: f64,
    /// Error bound; defaults to the pipeline's delta policy.
    #[arg(long)]
    delta: Option<f64>,
    /// QMC ensemble size.
    #[arg(long = "qmc-m", default_value_t = 1000)]
    qmc_m: usize,
    /// Bootstrap replicates for MEDIAN and QUANTILE.
    #[arg(long = "bootstrap-b", default_value_t = 200)]
    bootstrap_b: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Serve requests concurrently.
    #[arg(long)]
    parallel: bool,
}

impl Knobs {
    fn config(&self, loaded: &LoadedPipeline) -> RequestConfig {
        RequestConfig {
            delta: self.delta.unwrap_or(loaded.delta),
            tau: self.tau,
            m: self.qmc_m,
            seed: self.seed,
            planner: PlannerConfig {
                alpha: self.alpha,
                gamma: self.gamma,
                ..PlannerConfig::default()
            },
            bootstrap_b: self.bootstrap_b,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of aggregation features.
    #[arg(long, default_value_t = 3)]
    features: usize,
    /// Rows per partition (N for every feature).
    #[arg(long, default_value_t = 10_000)]
    rows: usize,
    #[arg(long, default_value_t = 20)]
    groups: usize,
    #[arg(long, default_value_t = 100)]
    requests: usize,
    /// gbdt, forest, linear, or mlp.
    #[arg(long, default_value = "gbdt")]
    model: ModelKind,
    #[arg(long)]
    classification: bool,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    /// Model response amplitude; 0 gives a constant model.
    #[arg(long, default_value_t = 1.0)]
    resilience: f64,
    /// Holdout label noise (standard deviation).
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 25)]
    holdout: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn open(path: &PathBuf) -> Result<LoadedPipeline> {
    load_pipeline(path).with_context(|| format!("loading pipeline {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Replay {
            pipeline,
            requests,
            report,
            knobs,
        } => {
            let loaded = open(&pipeline)?;
            let config = knobs.config(&loaded);
            let requests = load_requests(&requests, &loaded.spec.request_fields())?;
            let rep = replay(&loaded.pipeline, &requests, &config, knobs.parallel)?;
            match report {
                Some(path) => {
                    fs::write(&path, rep.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
                    print!("{}", rep.render_table());
                }
                None => {
                    eprint!("{}", rep.render_table());
                    println!("{}", rep.to_json());
                }
            }
        }
        Command::Serve { pipeline, port, knobs } => {
            let loaded = open(&pipeline)?;
            let config = knobs.config(&loaded);
            match port {
                Some(port) => {
                    let listener = TcpListener::bind(("127.0.0.1", port))?;
                    log::info!("listening on {}", listener.local_addr()?);
                    serve_tcp(&loaded.pipeline, &config, listener, None)?;
                }
                None => {
                    let workers = if knobs.parallel {
                        std::thread::available_parallelism().map_or(4, |n| n.get())
                    } else {
                        1
                    };
                    let mut stdout = io::stdout().lock();
                    serve_lines(&loaded.pipeline, &config, BufReader::new(io::stdin()), &mut stdout, workers)?;
                }
            }
        }
        Command::Exact { pipeline, requests } => {
            let loaded = open(&pipeline)?;
            let requests = load_requests(&requests, &loaded.spec.request_fields())?;
            let mut out = io::stdout().lock();
            for r in &requests {
                let rep = exact_serve(&loaded.pipeline, r)?;
                writeln!(out, "{}", serde_json::to_string(&rep)?)?;
            }
        }
        Command::Synth(args) => {
            let config = SynthConfig {
                features: args.features,
                rows_per_group: args.rows,
                groups: args.groups,
                requests: args.requests,
                model: args.model,
                task: if args.classification {
                    Task::Classification
                } else {
                    Task::Regression
                },
                classes: args.classes,
                resilience: args.resilience,
                noise: args.noise,
                holdout_per_group: args.holdout,
                seed: args.seed,
            };
            let workload = synthesize(&config)?;
            let manifest = write_workload(&workload, &args.out)?;
            println!("wrote {} files to {}", manifest.files.len(), args.out.display());
            for (file, digest) in &manifest.files {
                println!("  {digest}  {file}");
            }
            if config.task == Task::Regression {
                println!("holdout MAE (default delta): {}", workload.delta);
            }
        }
        Command::Validate { pipeline, requests } => {
            let loaded = open(&pipeline)?;
            let p = &loaded.pipeline;
            println!(
                "pipeline `{}`: {} aggregation features, {} pass-through, model arity {}, task {:?}, delta {}",
                p.name,
                p.features.len(),
                p.passthrough.len(),
                p.model.arity(),
                p.task(),
                loaded.delta
            );
            if let Some(path) = requests {
                let requests = load_requests(&path, &loaded.spec.request_fields())?;
                if requests.is_empty() {
                    bail!("{} has no requests", path.display());
                }
                println!("{} requests match the pipeline's request fields", requests.len());
            }
        }
    }
    Ok(())
}
