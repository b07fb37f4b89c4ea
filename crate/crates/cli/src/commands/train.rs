use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use clap::Args;
use semrank_core::jsonl::{read_jsonl, read_meta};
use semrank_core::retrieval::{train_rar as fit, LabeledPair, RarExample, RarWeights};
use serde_json::json;

use super::{load_corpus, load_queries, note_input};
use crate::config::require;
use crate::output::write_json;
use crate::{CliError, Context};

#[derive(Debug, Clone, Args)]
pub struct TrainRarArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Relevance share of the objective; the rest is engagement.
    #[arg(long)]
    pub lambda: Option<f64>,
}

/// Share of examples where the sign of the shifted score agrees with the label.
pub fn sign_accuracy(weights: &RarWeights<f32>, intercept: f32, data: &[RarExample<f32>], relevance: bool) -> f64 {
    let params = weights.params();
    let hits = data
        .iter()
        .filter(|e| (e.score(&params) + intercept > 0.0) == if relevance { e.relevance } else { e.engagement })
        .count();
    hits as f64 / data.len().max(1) as f64
}

pub fn train_rar(ctx: &Context, args: &TrainRarArgs) -> Result<(), CliError> {
    let mut cfg = ctx.config.clone();
    if let Some(e) = args.epochs {
        cfg.rar.epochs = e;
    }
    if let Some(lr) = args.learning_rate {
        cfg.rar.learning_rate = lr;
    }
    if let Some(l) = args.lambda {
        cfg.rar.lambda = l;
    }
    let corpus_path = require(&args.corpus, &cfg.paths.corpus, "corpus")?;
    let queries_path = require(&args.queries, &cfg.paths.queries, "queries")?;
    let labels_path = require(&args.labels, &cfg.paths.labels, "labels")?;
    let corpus = load_corpus(&corpus_path)?;
    let queries = load_queries(&queries_path)?;
    let labels: Vec<LabeledPair> = read_jsonl(&labels_path)?;

    let by_id: HashMap<&str, _> = queries.iter().map(|q| (q.query_id.as_str(), q)).collect();
    let init = RarWeights::<f32>::cosine_only(corpus.feature_names());
    let mut offenders = Vec::new();
    let mut data = Vec::with_capacity(labels.len());
    for pair in &labels {
        match (by_id.get(pair.query_id.as_str()), corpus.get(pair.doc_id)) {
            (Some(q), Some(d)) => data.push(RarExample::from_pair(q, d, &init, pair)?),
            _ => offenders.push(format!("{}/{}", pair.query_id, pair.doc_id)),
        }
    }
    if !offenders.is_empty() {
        return Err(CliError::Reconciliation { offenders });
    }
    let report = fit(&init, &data, cfg.rar.lambda as f32, cfg.rar.learning_rate as f32, cfg.rar.epochs)?;

    let mut versions = BTreeMap::new();
    note_input(&mut versions, "labels", read_meta(&labels_path)?);
    let body = json!({
        "weights": report.weights,
        "initial_loss": report.initial_loss(),
        "final_loss": report.best_loss(),
        "intercept": report.intercept,
        "accuracy_relevance": sign_accuracy(&report.weights, report.intercept, &data, true),
        "accuracy_engagement": sign_accuracy(&report.weights, report.intercept, &data, false),
        "loss_history": report.loss_history,
    });
    write_json(ctx.out.as_deref(), &cfg.meta(versions), &body)
}
