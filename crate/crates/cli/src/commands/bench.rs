use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use rand::Rng;
use semrank_core::midtier::fit_cost_model;
use semrank_core::model::{init_model, ModelWeights};
use semrank_core::scoring::{ItemPayload, ScoreItem, ScoreMode, ScoreRequest, ScoreResult, ScoringEngine};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use super::load_model;
use crate::config::{optional, substream, substream_seed, BenchConfig};
use crate::output::write_json;
use crate::{CliError, Context};

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Weights to benchmark; a fresh toy model from the init substream when omitted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub prefix_len: Option<usize>,
    #[arg(long)]
    pub item_len: Option<usize>,
    #[arg(long)]
    pub n_items: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: ScoreMode,
    pub median_ms: f64,
    pub items_per_s: f64,
    pub speedup_vs_naive: f64,
    pub max_abs_dev_vs_naive: f64,
    pub attention_units: u64,
    pub linear_units: u64,
    pub total_units: u64,
    /// Total flop units relative to naive scoring.
    pub flops_ratio_vs_naive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub alpha_ms_per_unit: f64,
    pub beta_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub workload: BenchConfig,
    pub modes: Vec<ModeReport>,
    pub cost_model: Option<CostModel>,
    pub within_tolerance: bool,
}

/// One request of random byte tokens; mixed mode carries the items as
/// their token embeddings.
pub fn bench_request(
    weights: &ModelWeights<f32>,
    workload: &BenchConfig,
    seed: u64,
    mode: ScoreMode,
) -> Result<ScoreRequest<f32>, CliError> {
    let mut rng = substream(seed, "sampling");
    let mut tokens = |n: usize| (0..n).map(|_| rng.random_range(0..256u32)).collect::<Vec<_>>();
    let prefix_tokens = tokens(workload.prefix_len);
    let mut items = Vec::with_capacity(workload.n_items);
    for i in 0..workload.n_items {
        let t = tokens(workload.item_len);
        let payload = match mode {
            ScoreMode::Mixed => ItemPayload::Embeddings(weights.embed_tokens(&t)?),
            _ => ItemPayload::Tokens(t),
        };
        items.push(ScoreItem { id: format!("item{i}"), payload });
    }
    Ok(ScoreRequest { request_id: "bench".into(), prefix_tokens, items, mode, latency_sensitive: false })
}

fn max_deviation(a: &ScoreResult<f32>, b: &ScoreResult<f32>) -> f64 {
    a.scores
        .iter()
        .zip(&b.scores)
        .flat_map(|(x, y)| x.tasks.iter().map(move |(t, v)| (*v as f64 - y.tasks[t] as f64).abs()))
        .fold(0.0, f64::max)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Times every mode `runs` times, interleaving modes within each run so
/// machine drift affects them alike.
pub fn run_bench(
    engine: &ScoringEngine<f32>,
    workload: &BenchConfig,
    seed: u64,
    modes: &[ScoreMode],
    tolerance: f64,
) -> Result<BenchReport, CliError> {
    if workload.runs == 0 || workload.n_items == 0 {
        return Err(CliError::Config("bench needs at least one run and one item".into()));
    }
    let mut modes = modes.to_vec();
    if !modes.contains(&ScoreMode::Naive) {
        modes.insert(0, ScoreMode::Naive);
    }
    let requests =
        modes.iter().map(|&m| bench_request(engine.weights(), workload, seed, m)).collect::<Result<Vec<_>, _>>()?;
    let mut times = vec![Vec::with_capacity(workload.runs); modes.len()];
    let mut results: Vec<Option<ScoreResult<f32>>> = vec![None; modes.len()];
    for _ in 0..workload.runs {
        for (i, req) in requests.iter().enumerate() {
            let t = Instant::now();
            let r = engine.score(req)?;
            times[i].push(t.elapsed().as_secs_f64() * 1000.0);
            results[i] = Some(r);
        }
    }
    let results: Vec<ScoreResult<f32>> = results.into_iter().map(|r| r.expect("at least one run")).collect();
    let naive_idx = modes.iter().position(|&m| m == ScoreMode::Naive).expect("naive present");
    let naive_ms = median(times[naive_idx].clone());
    let naive_units = results[naive_idx].flops.total_units();
    let mut reports = Vec::new();
    for (i, &mode) in modes.iter().enumerate() {
        let ms = median(times[i].clone());
        let f = &results[i].flops;
        reports.push(ModeReport {
            mode,
            median_ms: ms,
            items_per_s: workload.n_items as f64 / (ms / 1000.0),
            speedup_vs_naive: naive_ms / ms,
            max_abs_dev_vs_naive: max_deviation(&results[i], &results[naive_idx]),
            attention_units: f.attention_units,
            linear_units: f.linear_units,
            total_units: f.total_units(),
            flops_ratio_vs_naive: f.total_units() as f64 / naive_units as f64,
        });
    }
    let samples: Vec<(u64, f64)> = reports.iter().map(|r| (r.total_units, r.median_ms)).collect();
    let cost_model = fit_cost_model(&samples).ok().map(|(a, b)| CostModel { alpha_ms_per_unit: a, beta_ms: b });
    let within_tolerance = reports.iter().all(|r| r.max_abs_dev_vs_naive <= tolerance);
    Ok(BenchReport { workload: workload.clone(), modes: reports, cost_model, within_tolerance })
}

pub fn bench(ctx: &Context, args: &BenchArgs) -> Result<(), CliError> {
    let mut cfg = ctx.config.clone();
    let b = &mut cfg.bench;
    b.prefix_len = args.prefix_len.unwrap_or(b.prefix_len);
    b.item_len = args.item_len.unwrap_or(b.item_len);
    b.n_items = args.n_items.unwrap_or(b.n_items);
    b.runs = args.runs.unwrap_or(b.runs);
    let weights = match optional(&args.weights, &cfg.paths.weights, "weights")? {
        Some(p) => load_model(&p)?,
        None => init_model(&cfg.model, substream_seed(cfg.seed, "init"))?,
    };
    let versions = BTreeMap::from([("weights".to_string(), weights.checksum())]);
    let engine = ScoringEngine::new(Arc::new(weights));
    let report = run_bench(&engine, &cfg.bench, cfg.seed, &ScoreMode::ALL, cfg.tolerances.score_agreement)?;
    write_json(ctx.out.as_deref(), &cfg.meta(versions), &report)?;
    if !report.within_tolerance {
        return Err(CliError::Contract("a mode disagrees with naive scoring beyond tolerance".into()));
    }
    Ok(())
}
