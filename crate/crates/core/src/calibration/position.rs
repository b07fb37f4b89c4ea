use std::collections::BTreeMap;

use super::isotonic::{calibrate, fit_isotonic, CalibrationHead};
use super::CalibrationError;
use crate::Scalar;

/// Highest display rank with its own head.
pub const MAX_RANK: usize = 25;

/// One head per rank `1..=MAX_RANK` plus a global head used when a rank had
/// no training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionCalibrator<T> {
    pub global: CalibrationHead<T>,
    /// Index `r - 1` holds the head for rank `r`.
    pub by_rank: Vec<Option<CalibrationHead<T>>>,
}

impl<T: Scalar> PositionCalibrator<T> {
    pub fn head(&self, rank: usize) -> &CalibrationHead<T> {
        match rank.checked_sub(1).and_then(|i| self.by_rank.get(i)) {
            Some(Some(h)) => h,
            _ => &self.global,
        }
    }

    /// Outcome probability if the document were shown at `rank`.
    pub fn calibrate_at(&self, rank: usize, score: T) -> Result<T, CalibrationError> {
        calibrate(self.head(rank), score)
    }

    /// The full vector of per-rank probabilities for one raw score.
    pub fn position_vector(&self, score: T) -> Result<Vec<T>, CalibrationError> {
        (1..=MAX_RANK).map(|r| self.calibrate_at(r, score)).collect()
    }

    pub fn absent_ranks(&self) -> Vec<usize> {
        (1..=MAX_RANK).filter(|&r| self.by_rank[r - 1].is_none()).collect()
    }
}

/// Fits every rank bucket independently from `(rank, raw score, outcome)`
/// rows. Rows outside `1..=MAX_RANK` are ignored, including by the global head.
pub fn fit_position_conditional<T: Scalar>(rows: &[(usize, T, T)]) -> Result<PositionCalibrator<T>, CalibrationError> {
    let mut buckets: Vec<Vec<(T, T)>> = vec![Vec::new(); MAX_RANK];
    let mut all = Vec::new();
    for &(rank, score, outcome) in rows {
        if (1..=MAX_RANK).contains(&rank) {
            buckets[rank - 1].push((score, outcome));
            all.push((score, outcome));
        }
    }
    if all.is_empty() {
        return Err(CalibrationError::Input(format!("no rows with rank in 1..={MAX_RANK}")));
    }
    let global = fit_isotonic(&all)?;
    let by_rank = buckets
        .iter()
        .map(|b| if b.is_empty() { Ok(None) } else { fit_isotonic(b).map(Some) })
        .collect::<Result<_, _>>()?;
    Ok(PositionCalibrator { global, by_rank })
}

/// One isotonic head per categorical bucket.
pub fn fit_bucketed<T: Scalar>(
    rows: &[(String, T, T)],
) -> Result<BTreeMap<String, CalibrationHead<T>>, CalibrationError> {
    let mut groups: BTreeMap<String, Vec<(T, T)>> = BTreeMap::new();
    for (bucket, s, y) in rows {
        groups.entry(bucket.clone()).or_default().push((*s, *y));
    }
    groups.into_iter().map(|(b, pairs)| fit_isotonic(&pairs).map(|h| (b, h))).collect()
}
