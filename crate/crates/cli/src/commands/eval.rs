use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use clap::Args;
use semrank_core::calibration::observed_expected_ratio;
use semrank_core::data::InteractionLog;
use semrank_core::jsonl::{read_jsonl, read_meta};
use semrank_core::model::RELEVANCE_TASK;
use semrank_core::ranking::{auroc, ndcg_at_k, precision_recall_at_k, MetricRecord};
use semrank_core::retrieval::{DocId, LabeledPair};
use serde::{Deserialize, Serialize};

use super::note_input;
use crate::config::{optional, require};
use crate::output::write_records;
use crate::{CliError, Context};

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Output of `score` or `retrieve`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub logs: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

/// A ranked row from either `score` or `retrieve` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub query_id: String,
    pub doc_id: DocId,
    pub rank: usize,
    #[serde(default)]
    pub raw: BTreeMap<String, f32>,
    #[serde(default)]
    pub calibrated: BTreeMap<String, f64>,
}

/// Outcome per task keyed by (query, doc).
type Outcomes<'a> = BTreeMap<String, HashMap<(&'a str, DocId), bool>>;

fn outcomes<'a>(labels: &'a [LabeledPair], logs: &'a [InteractionLog]) -> Outcomes<'a> {
    let mut out: Outcomes<'a> = BTreeMap::new();
    for l in labels {
        out.entry(RELEVANCE_TASK.into()).or_default().insert((l.query_id.as_str(), l.doc_id), l.relevance);
    }
    for log in logs {
        for (action, &taken) in &log.actions {
            out.entry(action.clone()).or_default().insert((log.query_id.as_str(), log.doc_id), taken);
        }
    }
    out
}

/// Metric table for a ranked run. Ranking metrics use the relevance labels,
/// averaged over queries with at least one relevant document; AUROC and O/E
/// use every labeled pair that carries the task's score.
pub fn evaluate(
    run: &[RunRow],
    labels: &[LabeledPair],
    logs: &[InteractionLog],
    k: usize,
) -> Result<Vec<MetricRecord>, CliError> {
    let judged: BTreeSet<&str> =
        labels.iter().map(|l| l.query_id.as_str()).chain(logs.iter().map(|l| l.query_id.as_str())).collect();
    let offenders: BTreeSet<String> =
        run.iter().filter(|r| !judged.contains(r.query_id.as_str())).map(|r| r.query_id.clone()).collect();
    if !offenders.is_empty() {
        return Err(CliError::Reconciliation { offenders: offenders.into_iter().collect() });
    }

    let mut records = Vec::new();
    if !labels.is_empty() {
        let grades: HashMap<(&str, DocId), &LabeledPair> =
            labels.iter().map(|l| ((l.query_id.as_str(), l.doc_id), l)).collect();
        let mut relevant_count: HashMap<&str, usize> = HashMap::new();
        for l in labels.iter().filter(|l| l.relevance) {
            *relevant_count.entry(l.query_id.as_str()).or_default() += 1;
        }
        let mut by_query: BTreeMap<&str, Vec<&RunRow>> = BTreeMap::new();
        for r in run {
            by_query.entry(r.query_id.as_str()).or_default().push(r);
        }
        let (mut ndcg, mut p, mut rcl, mut n) = (0.0, 0.0, 0.0, 0usize);
        for (q, mut rows) in by_query {
            let total = relevant_count.get(q).copied().unwrap_or(0);
            if total == 0 {
                continue;
            }
            rows.sort_by_key(|r| r.rank);
            let label = |r: &&RunRow| grades.get(&(q, r.doc_id));
            let gains: Vec<f64> = rows.iter().map(|r| label(r).map_or(0.0, |l| f64::from(l.grade) - 1.0)).collect();
            let relevant: Vec<bool> = rows.iter().map(|r| label(r).is_some_and(|l| l.relevance)).collect();
            ndcg += ndcg_at_k(&gains, k)?;
            let (pk, rk): (f64, f64) = precision_recall_at_k(&relevant, k, total)?;
            p += pk;
            rcl += rk;
            n += 1;
        }
        if n > 0 {
            let n = n as f64;
            records.push(MetricRecord::new("ndcg", Some(k), ndcg / n));
            records.push(MetricRecord::new("precision", Some(k), p / n));
            records.push(MetricRecord::new("recall", Some(k), rcl / n));
        }
    }

    for (task, truth) in outcomes(labels, logs) {
        let (mut scores, mut ys, mut preds, mut obs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for r in run {
            let Some(&y) = truth.get(&(r.query_id.as_str(), r.doc_id)) else { continue };
            if let Some(&s) = r.raw.get(&task) {
                scores.push(s as f64);
                ys.push(y);
            }
            if let Some(&c) = r.calibrated.get(&task) {
                preds.push(c);
                obs.push(f64::from(u8::from(y)));
            }
        }
        if let Ok(a) = auroc(&scores, &ys) {
            records.push(MetricRecord::new(format!("auroc.{task}"), None, a));
        }
        if let Ok(oe) = observed_expected_ratio(&preds, &obs) {
            records.push(MetricRecord::new(format!("oe.{task}"), None, oe));
        }
    }
    Ok(records)
}

pub fn render_table(records: &[MetricRecord]) -> String {
    let mut out = format!("{:<24} {:>4} {:>10}\n", "metric", "k", "value");
    for r in records {
        let k = r.k.map_or("-".to_string(), |k| k.to_string());
        out.push_str(&format!("{:<24} {:>4} {:>10.6}\n", r.metric, k, r.value));
    }
    out
}

pub fn eval(ctx: &Context, args: &EvalArgs) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let labels_path = optional(&args.labels, &cfg.paths.labels, "labels")?;
    let logs_path = optional(&args.logs, &cfg.paths.logs, "logs")?;
    if labels_path.is_none() && logs_path.is_none() {
        return Err(CliError::MissingPath("labels or logs".into()));
    }
    let run_path = require(&Some(args.run.clone()), &None, "run")?;
    let run: Vec<RunRow> = read_jsonl(&run_path)?;
    let labels: Vec<LabeledPair> = match &labels_path {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    let logs: Vec<InteractionLog> = match &logs_path {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    let records = evaluate(&run, &labels, &logs, args.k)?;
    print!("{}", render_table(&records));
    if let Some(out) = &ctx.out {
        let mut versions = BTreeMap::new();
        note_input(&mut versions, "run", read_meta(&run_path)?);
        write_records(Some(out), &cfg.meta(versions), &records)?;
    }
    Ok(())
}
