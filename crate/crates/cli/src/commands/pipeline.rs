//! Offline retrieval and scoring; chained, they reproduce the service's
//! query path one stage at a time.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use semrank_core::jsonl::read_jsonl;
use semrank_core::jsonl::read_meta;
use semrank_core::model::ByteTokenizer;
use semrank_core::retrieval::{exhaustive_topk, exhaustive_topk_sharded, DocId, DocumentRecord, QuerySpec, ScoredDoc};
use semrank_core::scoring::ScoringEngine;
use semrank_core::search::stages::{blend, build_score_request, calibrate_tasks, calibration_heads, order_results};
use semrank_core::search::DepthPolicy;
use serde::{Deserialize, Serialize};

use super::{load_calibration, load_corpus, load_model, load_queries, load_rar, note_input};
use crate::config::{optional, require};
use crate::output::write_records;
use crate::{CliError, Context};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub query_id: String,
    pub doc_id: DocId,
    pub rank: usize,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub query_id: String,
    pub doc_id: DocId,
    pub rank: usize,
    /// Absent for candidates beyond the scoring depth.
    pub final_score: Option<f64>,
    pub calibrated: BTreeMap<String, f64>,
    pub raw: BTreeMap<String, f32>,
    pub retrieval_score: f32,
}

#[derive(Debug, Clone, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Trained retrieval weights; cosine similarity alone when omitted.
    #[arg(long)]
    pub rar: Option<PathBuf>,
    /// Scan the corpus on this many threads; results are identical.
    #[arg(long, default_value_t = 1)]
    pub shards: usize,
}

pub fn retrieve(ctx: &Context, args: &RetrieveArgs) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let corpus_path = require(&args.corpus, &cfg.paths.corpus, "corpus")?;
    let queries_path = require(&args.queries, &cfg.paths.queries, "queries")?;
    let rar_path = optional(&args.rar, &cfg.paths.rar, "rar")?;
    let corpus = load_corpus(&corpus_path)?;
    let queries = load_queries(&queries_path)?;
    let rar = load_rar(rar_path.as_deref(), &corpus)?;
    if args.shards == 0 {
        return Err(CliError::Config("--shards must be at least 1".into()));
    }

    let mut rows = Vec::new();
    for q in &queries {
        let spec = QuerySpec { k: cfg.search.retrieval_k, ..q.clone() };
        let hits = if args.shards == 1 {
            exhaustive_topk(&corpus, &spec, &rar)?
        } else {
            exhaustive_topk_sharded(&corpus, &spec, &rar, args.shards)?
        };
        rows.extend(hits.into_iter().enumerate().map(|(i, h)| CandidateRow {
            query_id: q.query_id.clone(),
            doc_id: h.doc_id,
            rank: i + 1,
            score: h.score,
        }));
    }
    let mut versions = BTreeMap::new();
    note_input(&mut versions, "corpus", read_meta(&corpus_path)?);
    note_input(&mut versions, "queries", read_meta(&queries_path)?);
    write_records(ctx.out.as_deref(), &cfg.meta(versions), &rows)
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Output of `retrieve`.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
}

/// Depth used offline: the fixed depth, or the controller's starting depth.
pub fn offline_depth(policy: DepthPolicy, d_max: usize) -> usize {
    match policy {
        DepthPolicy::Fixed { depth } => depth,
        DepthPolicy::Pid => d_max,
    }
}

pub fn score(ctx: &Context, args: &ScoreArgs) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let corpus_path = require(&args.corpus, &cfg.paths.corpus, "corpus")?;
    let queries_path = require(&args.queries, &cfg.paths.queries, "queries")?;
    let cand_path = require(&args.candidates, &cfg.paths.candidates, "candidates")?;
    let weights_path = require(&args.weights, &cfg.paths.weights, "weights")?;
    let cal_path = optional(&args.calibration, &cfg.paths.calibration, "calibration")?;

    let corpus = load_corpus(&corpus_path)?;
    let queries = load_queries(&queries_path)?;
    let candidates: Vec<CandidateRow> = read_jsonl(&cand_path)?;
    let weights = load_model(&weights_path)?;
    let checksum = weights.checksum();
    let tokenizer = ByteTokenizer::new(weights.config.max_seq);
    let engine = ScoringEngine::new(Arc::new(weights));
    let heads = match load_calibration(cal_path.as_deref())? {
        Some(a) => calibration_heads(&a)?,
        None => BTreeMap::new(),
    };
    let depth = offline_depth(cfg.search.depth, cfg.search.pid.d_max);

    let mut by_query: BTreeMap<&str, Vec<&CandidateRow>> = BTreeMap::new();
    for c in &candidates {
        by_query.entry(c.query_id.as_str()).or_default().push(c);
    }
    let known: BTreeMap<&str, &QuerySpec<f32>> = queries.iter().map(|q| (q.query_id.as_str(), q)).collect();
    let mut offenders: Vec<String> =
        by_query.keys().filter(|q| !known.contains_key(*q)).map(|q| q.to_string()).collect();
    offenders.extend(
        candidates.iter().filter(|c| corpus.get(c.doc_id).is_none()).map(|c| format!("{}/{}", c.query_id, c.doc_id)),
    );
    if !offenders.is_empty() {
        return Err(CliError::Reconciliation { offenders });
    }

    let mut rows = Vec::new();
    for q in &queries {
        let Some(list) = by_query.get_mut(q.query_id.as_str()) else { continue };
        list.sort_by_key(|c| c.rank);
        let text = q.text.as_deref().ok_or_else(|| CliError::Contract(format!("query {} has no text", q.query_id)))?;
        let cands: Vec<ScoredDoc<f32>> = list.iter().map(|c| ScoredDoc { doc_id: c.doc_id, score: c.score }).collect();
        let n = depth.min(cands.len());
        let docs: Vec<&DocumentRecord<f32>> =
            cands[..n].iter().map(|c| corpus.get(c.doc_id).expect("checked above")).collect();
        let mut scored = Vec::with_capacity(n);
        if n > 0 {
            let req = build_score_request(
                &tokenizer,
                engine.weights(),
                &cfg.search,
                &q.query_id,
                text,
                &docs,
                cfg.search.mode,
            )?;
            for s in engine.score(&req)?.scores {
                let calibrated = calibrate_tasks(&heads, &s.tasks)?;
                let final_score = blend(&cfg.search.blend, &calibrated);
                scored.push((s.tasks, calibrated, final_score));
            }
        }
        rows.extend(order_results(&cands, scored, cands.len()).into_iter().map(|h| ScoreRow {
            query_id: q.query_id.clone(),
            doc_id: h.doc_id,
            rank: h.rank,
            final_score: h.final_score,
            calibrated: h.calibrated,
            raw: h.raw,
            retrieval_score: h.retrieval_score,
        }));
    }
    let mut versions = BTreeMap::from([("weights".to_string(), checksum)]);
    note_input(&mut versions, "candidates", read_meta(&cand_path)?);
    write_records(ctx.out.as_deref(), &cfg.meta(versions), &rows)
}
