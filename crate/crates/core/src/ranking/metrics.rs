use serde::{Deserialize, Serialize};

use super::RankingError;
use crate::Scalar;

/// Gain used by [`ndcg_at_k`]; written into metric reports.
pub const NDCG_GAIN_CONVENTION: &str = "exp2_minus_1";

/// One line of a metric report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub k: Option<usize>,
    pub value: f64,
    pub gain_convention: String,
}

impl MetricRecord {
    pub fn new(metric: impl Into<String>, k: Option<usize>, value: f64) -> Self {
        Self { metric: metric.into(), k, value, gain_convention: NDCG_GAIN_CONVENTION.to_string() }
    }
}

fn dcg<T: Scalar>(grades: &[T], k: usize) -> T {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| (T::lit(2.0).powf(g) - T::one()) / T::from_count(i + 2).log2())
        .sum()
}

/// NDCG@k with gain `2^g - 1` and discount `log2(rank + 1)`; 0 when no
/// grade is positive.
pub fn ndcg_at_k<T: Scalar>(ranked_grades: &[T], k: usize) -> Result<T, RankingError> {
    if k == 0 {
        return Err(RankingError::Parameter("k must be >= 1".into()));
    }
    let mut ideal = ranked_grades.to_vec();
    ideal.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let idcg = dcg(&ideal, k);
    if idcg <= T::zero() {
        return Ok(T::zero());
    }
    Ok(dcg(ranked_grades, k) / idcg)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auroc<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<T, RankingError> {
    if scores.len() != labels.len() {
        return Err(RankingError::Input("scores and labels differ in length".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(RankingError::UndefinedMetric("AUROC needs at least one positive and one negative".into()));
    }
    // Mann-Whitney U with mid-ranks for tied groups.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += mid_rank * order[i..=j].iter().filter(|&&o| labels[o]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok(T::lit((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n)))
}

/// `(P@k, R@k)`; recall is 0 when nothing is relevant.
pub fn precision_recall_at_k<T: Scalar>(
    ranked_relevant: &[bool],
    k: usize,
    total_relevant: usize,
) -> Result<(T, T), RankingError> {
    if k == 0 {
        return Err(RankingError::Parameter("k must be >= 1".into()));
    }
    let hits = ranked_relevant.iter().take(k).filter(|&&r| r).count();
    let precision = T::from_count(hits) / T::from_count(k);
    let recall = if total_relevant == 0 { T::zero() } else { T::from_count(hits) / T::from_count(total_relevant) };
    Ok((precision, recall))
}
