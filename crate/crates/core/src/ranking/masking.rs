use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::losses::{bce_with_logit, TaskBatch};
use super::RankingError;
use crate::scalar::logistic;
use crate::Scalar;

/// One impression with its binary action outcomes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRow {
    pub query_id: String,
    pub doc_id: String,
    pub actions: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionCell {
    Positive,
    Negative,
    Masked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedRow {
    pub query_id: String,
    pub doc_id: String,
    pub cells: BTreeMap<String, ActionCell>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedActionBatch {
    pub actions: Vec<String>,
    pub rows: Vec<MaskedRow>,
}

/// Per (query, action): if no row in the query received the action every
/// cell is masked, otherwise positives stay positive and the rest become
/// negatives.
pub fn apply_loss_mask(rows: &[ActionRow], actions: &[String]) -> MaskedActionBatch {
    let mut has_positive: BTreeSet<(&str, &str)> = BTreeSet::new();
    for r in rows {
        for a in actions {
            if r.actions.get(a).copied().unwrap_or(false) {
                has_positive.insert((r.query_id.as_str(), a.as_str()));
            }
        }
    }
    let rows = rows
        .iter()
        .map(|r| MaskedRow {
            query_id: r.query_id.clone(),
            doc_id: r.doc_id.clone(),
            cells: actions
                .iter()
                .map(|a| {
                    let cell = if r.actions.get(a).copied().unwrap_or(false) {
                        ActionCell::Positive
                    } else if has_positive.contains(&(r.query_id.as_str(), a.as_str())) {
                        ActionCell::Negative
                    } else {
                        ActionCell::Masked
                    };
                    (a.clone(), cell)
                })
                .collect(),
        })
        .collect();
    MaskedActionBatch { actions: actions.to_vec(), rows }
}

impl MaskedActionBatch {
    /// Pointwise baseline: every non-positive cell is a negative.
    pub fn unmasked(rows: &[ActionRow], actions: &[String]) -> Self {
        let mut batch = apply_loss_mask(rows, actions);
        for row in &mut batch.rows {
            for cell in row.cells.values_mut() {
                if *cell == ActionCell::Masked {
                    *cell = ActionCell::Negative;
                }
            }
        }
        batch
    }

    pub fn cell(&self, row: usize, action: &str) -> ActionCell {
        self.rows[row].cells.get(action).copied().unwrap_or(ActionCell::Masked)
    }

    /// Loss inputs for one action head given per-row predictions.
    pub fn task_batch<T: Scalar>(&self, action: &str, preds: &[T], weight: T) -> Result<TaskBatch<T>, RankingError> {
        if preds.len() != self.rows.len() {
            return Err(RankingError::Input(format!("{} predictions for {} rows", preds.len(), self.rows.len())));
        }
        let cells: Vec<ActionCell> = (0..self.rows.len()).map(|i| self.cell(i, action)).collect();
        Ok(TaskBatch {
            task: action.to_string(),
            weight,
            preds: preds.to_vec(),
            labels: cells.iter().map(|&c| if c == ActionCell::Positive { T::one() } else { T::zero() }).collect(),
            include: cells.iter().map(|&c| c != ActionCell::Masked).collect(),
        })
    }
}

/// Logistic-regression head for one action trained by full-batch gradient
/// descent on the unmasked rows. Returns `[w_1..w_n, bias]`.
pub fn fit_action_head<T: Scalar>(
    features: &[Vec<T>],
    batch: &MaskedActionBatch,
    action: &str,
    learning_rate: T,
    epochs: usize,
) -> Result<Vec<T>, RankingError> {
    if features.len() != batch.rows.len() {
        return Err(RankingError::Input("feature rows do not match batch rows".into()));
    }
    let dim = features.first().map_or(0, Vec::len);
    let rows: Vec<(usize, T)> = (0..batch.rows.len())
        .filter_map(|i| match batch.cell(i, action) {
            ActionCell::Positive => Some((i, T::one())),
            ActionCell::Negative => Some((i, T::zero())),
            ActionCell::Masked => None,
        })
        .collect();
    let mut w = vec![T::zero(); dim + 1];
    if rows.is_empty() {
        return Ok(w);
    }
    let inv_n = T::one() / T::from_count(rows.len());
    for _ in 0..epochs {
        let mut grad = vec![T::zero(); dim + 1];
        for &(i, y) in &rows {
            let r = logistic(predict_logit(&w, &features[i])) - y;
            for (g, &x) in grad.iter_mut().zip(&features[i]) {
                *g = *g + r * x;
            }
            grad[dim] = grad[dim] + r;
        }
        for (wj, gj) in w.iter_mut().zip(grad) {
            *wj = *wj - learning_rate * gj * inv_n;
        }
    }
    let loss = rows.iter().map(|&(i, y)| bce_with_logit(predict_logit(&w, &features[i]), y)).sum::<T>() * inv_n;
    if !loss.is_finite() {
        return Err(RankingError::Parameter("action head training diverged; lower the learning rate".into()));
    }
    Ok(w)
}

fn predict_logit<T: Scalar>(w: &[T], x: &[T]) -> T {
    let dim = w.len() - 1;
    x.iter().zip(&w[..dim]).fold(w[dim], |acc, (&a, &b)| acc + a * b)
}

/// Probability predicted by a head from [`fit_action_head`].
pub fn predict_action<T: Scalar>(head: &[T], x: &[T]) -> T {
    logistic(predict_logit(head, x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(q: &str, d: &str, acts: &[(&str, bool)]) -> ActionRow {
        ActionRow {
            query_id: q.into(),
            doc_id: d.into(),
            actions: acts.iter().map(|&(a, v)| (a.to_string(), v)).collect(),
        }
    }

    fn actions() -> Vec<String> {
        vec!["follow".into(), "message".into()]
    }

    #[test]
    fn no_positive_means_masked() {
        let rows = vec![row("q", "a", &[("follow", false)]), row("q", "b", &[("follow", false)])];
        let b = apply_loss_mask(&rows, &actions());
        assert!(b.rows.iter().all(|r| r.cells["follow"] == ActionCell::Masked));
    }

    #[test]
    fn co_shown_docs_become_negatives() {
        let rows = vec![row("q", "A", &[("message", true)]), row("q", "B", &[("message", false)]), row("q", "C", &[])];
        let b = apply_loss_mask(&rows, &actions());
        let cells: Vec<ActionCell> = b.rows.iter().map(|r| r.cells["message"]).collect();
        assert_eq!(cells, vec![ActionCell::Positive, ActionCell::Negative, ActionCell::Negative]);
        assert!(b.rows.iter().all(|r| r.cells["follow"] == ActionCell::Masked));
    }

    #[test]
    fn single_document_query_never_negative() {
        let rows = vec![row("solo", "x", &[("follow", true)])];
        let b = apply_loss_mask(&rows, &actions());
        assert_eq!(b.rows[0].cells["follow"], ActionCell::Positive);
        assert_eq!(b.rows[0].cells["message"], ActionCell::Masked);
    }

    #[test]
    fn unmasked_baseline_has_no_masked_cells() {
        let rows = vec![row("q", "a", &[]), row("q", "b", &[("follow", true)])];
        let b = MaskedActionBatch::unmasked(&rows, &actions());
        assert!(b.rows.iter().all(|r| r.cells.values().all(|&c| c != ActionCell::Masked)));
    }

    #[test]
    fn task_batch_respects_mask() {
        let rows = vec![row("q1", "a", &[("follow", true)]), row("q1", "b", &[]), row("q2", "c", &[])];
        let b = apply_loss_mask(&rows, &actions());
        let t = b.task_batch("follow", &[0.6f64, 0.2, 0.4], 1.0).unwrap();
        assert_eq!(t.labels, vec![1.0, 0.0, 0.0]);
        assert_eq!(t.include, vec![true, true, false]);
    }
}
