//! The `semrank` command line: data generation, offline retrieval, scoring,
//! training, calibration and evaluation, benchmarks, simulation and serving.
//!
//! Every file written carries a `{"meta": {seed, config_hash, versions}}`
//! header so a run can be replayed from its outputs.

pub mod commands;
pub mod config;
mod output;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use semrank_core::calibration::CalibrationError;
use semrank_core::jsonl::JsonlError;
use semrank_core::midtier::MidtierError;
use semrank_core::model::ModelError;
use semrank_core::ranking::RankingError;
use semrank_core::retrieval::RetrievalError;
use semrank_core::scoring::{ScoreMode, ScoringError};
use semrank_core::search::{DepthPolicy, SearchError};
use serde_json::json;
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("no path given for {0}")]
    MissingPath(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error("ids do not join across inputs: {}", offenders.join(", "))]
    Reconciliation { offenders: Vec<String> },
    #[error("{0}")]
    Contract(String),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Midtier(#[from] MidtierError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::MissingPath(_) => "missing_path",
            CliError::Io { .. } => "io",
            CliError::Json { .. } => "parse",
            CliError::Reconciliation { .. } => "reconciliation",
            CliError::Contract(_) => "contract",
            CliError::Jsonl(_) => "parse",
            CliError::Retrieval(_) => "retrieval",
            CliError::Scoring(_) => "scoring",
            CliError::Model(_) => "model",
            CliError::Calibration(_) => "calibration",
            CliError::Ranking(_) => "ranking",
            CliError::Midtier(_) => "midtier",
            CliError::Search(_) => "search",
        }
    }

    /// The single-line JSON written to stderr on failure.
    pub fn record(&self) -> serde_json::Value {
        let mut rec = json!({"error": self.kind(), "message": self.to_string()});
        if let CliError::Reconciliation { offenders } = self {
            rec["offenders"] = json!(offenders);
        }
        rec
    }
}

#[derive(Debug, Parser)]
#[command(name = "semrank", version, about = "Semantic search ranking toolkit")]
pub struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true, env = "SEMRANK_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "SEMRANK_SEED")]
    pub seed: Option<u64>,
    /// naive, ibpc, multi-item or mixed.
    #[arg(long, global = true, env = "SEMRANK_MODE")]
    pub mode: Option<ScoreMode>,
    /// Fixed scoring depth; replaces the latency controller.
    #[arg(long, global = true, env = "SEMRANK_DEPTH")]
    pub depth: Option<usize>,
    /// Candidates kept by retrieval.
    #[arg(long, global = true, env = "SEMRANK_TOPK")]
    pub topk: Option<usize>,
    /// Output file (or directory for gen-data); stdout when omitted.
    #[arg(long, global = true, env = "SEMRANK_OUT")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus, queries, labels, logs and toy weights.
    GenData(commands::data::GenDataArgs),
    /// Score retrieved candidates with the toy ranker.
    Score(commands::pipeline::ScoreArgs),
    /// Exhaustive filtered top-k retrieval.
    Retrieve(commands::pipeline::RetrieveArgs),
    /// Fit the retrieval-as-ranking weights.
    TrainRar(commands::train::TrainRarArgs),
    /// Fit isotonic calibration heads from scored, labeled pairs.
    Calibrate(commands::calibrate::CalibrateArgs),
    /// Ranking and calibration metrics for a scored run.
    Eval(commands::eval::EvalArgs),
    /// Compare scoring modes on throughput, flops and agreement.
    Bench(commands::bench::BenchArgs),
    /// Replay a synthetic workload through the serving controls.
    Simulate(commands::simulate::SimulateArgs),
    /// Run the HTTP search service.
    Serve(commands::serve::ServeArgs),
}

/// Effective configuration and output target for one invocation.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub out: Option<PathBuf>,
}

impl Cli {
    pub fn context(&self) -> Result<Context, CliError> {
        let mut config = RunConfig::load(self.config.as_deref())?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(mode) = self.mode {
            config.search.mode = mode;
            config.sim.mode = mode;
        }
        if let Some(depth) = self.depth {
            if depth == 0 {
                return Err(CliError::Config("--depth must be at least 1".into()));
            }
            config.search.depth = DepthPolicy::Fixed { depth };
        }
        if let Some(k) = self.topk {
            if k == 0 {
                return Err(CliError::Config("--topk must be at least 1".into()));
            }
            config.search.retrieval_k = k;
        }
        config.sim.seed = config.seed;
        Ok(Context { config, out: self.out.clone() })
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let ctx = cli.context()?;
    match &cli.command {
        Command::GenData(a) => commands::data::gen_data(&ctx, a),
        Command::Score(a) => commands::pipeline::score(&ctx, a),
        Command::Retrieve(a) => commands::pipeline::retrieve(&ctx, a),
        Command::TrainRar(a) => commands::train::train_rar(&ctx, a),
        Command::Calibrate(a) => commands::calibrate::calibrate(&ctx, a),
        Command::Eval(a) => commands::eval::eval(&ctx, a),
        Command::Bench(a) => commands::bench::bench(&ctx, a),
        Command::Simulate(a) => commands::simulate::simulate(&ctx, a),
        Command::Serve(a) => commands::serve::serve(&ctx, a),
    }
}
