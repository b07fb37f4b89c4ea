use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use clap::Args;
use semrank_core::calibration::{
    calibrate as apply, fit_position_conditional, observed_expected_ratio, CalibrationArtifact,
};
use semrank_core::data::InteractionLog;
use semrank_core::jsonl::{read_jsonl, read_meta};
use semrank_core::model::RELEVANCE_TASK;
use semrank_core::retrieval::LabeledPair;
use serde_json::json;

use super::note_input;
use super::pipeline::ScoreRow;
use crate::config::{optional, require};
use crate::output::write_json;
use crate::{CliError, Context};

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    /// Output of `score`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Relevance labels; fit the relevance head.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Interaction logs; fit one head per logged action.
    #[arg(long)]
    pub logs: Option<PathBuf>,
}

/// `(display rank, raw score, outcome)` rows per task, joined on
/// (query, document). Unlabeled scored pairs are skipped.
pub fn training_rows(
    scores: &[ScoreRow],
    labels: &[LabeledPair],
    logs: &[InteractionLog],
) -> BTreeMap<String, Vec<(usize, f64, f64)>> {
    let scored: HashMap<(&str, u64), &ScoreRow> =
        scores.iter().filter(|r| !r.raw.is_empty()).map(|r| ((r.query_id.as_str(), r.doc_id), r)).collect();
    let mut rows: BTreeMap<String, Vec<(usize, f64, f64)>> = BTreeMap::new();
    for l in labels {
        if let Some(s) = scored.get(&(l.query_id.as_str(), l.doc_id)) {
            if let Some(&raw) = s.raw.get(RELEVANCE_TASK) {
                let rank = l.production_rank.unwrap_or(s.rank);
                rows.entry(RELEVANCE_TASK.into()).or_default().push((
                    rank,
                    raw as f64,
                    f64::from(u8::from(l.relevance)),
                ));
            }
        }
    }
    for log in logs {
        if let Some(s) = scored.get(&(log.query_id.as_str(), log.doc_id)) {
            for (action, &taken) in &log.actions {
                if let Some(&raw) = s.raw.get(action) {
                    rows.entry(action.clone()).or_default().push((
                        log.position,
                        raw as f64,
                        f64::from(u8::from(taken)),
                    ));
                }
            }
        }
    }
    rows
}

pub fn calibrate(ctx: &Context, args: &CalibrateArgs) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let scores_path = require(&args.scores, &cfg.paths.scores, "scores")?;
    let labels_path = optional(&args.labels, &cfg.paths.labels, "labels")?;
    let logs_path = optional(&args.logs, &cfg.paths.logs, "logs")?;
    if labels_path.is_none() && logs_path.is_none() {
        return Err(CliError::MissingPath("labels or logs".into()));
    }
    let scores: Vec<ScoreRow> = read_jsonl(&scores_path)?;
    let labels: Vec<LabeledPair> = match &labels_path {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    let logs: Vec<InteractionLog> = match &logs_path {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };

    let rows = training_rows(&scores, &labels, &logs);
    if rows.is_empty() {
        return Err(CliError::Reconciliation { offenders: vec!["no scored pair has a label".into()] });
    }
    let mut artifact = CalibrationArtifact { heads: Vec::new() };
    let mut fit_report = BTreeMap::new();
    for (task, task_rows) in &rows {
        let cal = fit_position_conditional(task_rows)?;
        let preds = task_rows.iter().map(|r| apply(&cal.global, r.1)).collect::<Result<Vec<f64>, _>>()?;
        let outcomes: Vec<f64> = task_rows.iter().map(|r| r.2).collect();
        let oe = observed_expected_ratio(&preds, &outcomes).ok();
        fit_report.insert(task.clone(), json!({"rows": task_rows.len(), "training_oe": oe}));
        artifact.heads.extend(CalibrationArtifact::from_position(task, &cal).heads);
    }

    let mut versions = BTreeMap::new();
    note_input(&mut versions, "scores", read_meta(&scores_path)?);
    write_json(ctx.out.as_deref(), &cfg.meta(versions), &json!({"fit": fit_report, "artifact": artifact}))
}
