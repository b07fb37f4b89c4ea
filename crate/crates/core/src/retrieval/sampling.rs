use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DocId, QueryBucket, RetrievalError};

/// Grades above this are positives.
const POSITIVE_ABOVE: u8 = 2;
const MAX_POSITIVES: usize = 2;
const MAX_NEGATIVES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradedCandidate {
    pub doc_id: DocId,
    pub grade: u8,
    /// 1-based retrieval rank.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastiveTuple {
    pub positives: Vec<DocId>,
    pub negatives: Vec<DocId>,
    /// No non-relevant document was available among the top candidates.
    pub lacks_negatives: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MiningOutcome {
    Tuple(ContrastiveTuple),
    /// No positive exists; the query contributes nothing.
    SkipQuery,
}

fn sample(mut pool: Vec<GradedCandidate>, n: usize, rng: &mut ChaCha8Rng) -> Vec<DocId> {
    pool.shuffle(rng);
    pool.truncate(n);
    pool.sort_by_key(|c| c.rank);
    pool.into_iter().map(|c| c.doc_id).collect()
}

/// Up to 2 positives (grade > 2) and up to 3 hard negatives (grade ≤ 2) drawn
/// from the `hard_pool` best-ranked non-relevant candidates. Output lists are
/// in rank order.
pub fn mine_hard_negatives(candidates: &[GradedCandidate], hard_pool: usize, seed: u64) -> MiningOutcome {
    let mut ranked = candidates.to_vec();
    ranked.sort_by_key(|c| (c.rank, c.doc_id));
    let (pos, neg): (Vec<_>, Vec<_>) = ranked.into_iter().partition(|c| c.grade > POSITIVE_ABOVE);
    if pos.is_empty() {
        return MiningOutcome::SkipQuery;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positives = sample(pos, MAX_POSITIVES, &mut rng);
    let negatives = sample(neg.into_iter().take(hard_pool).collect(), MAX_NEGATIVES, &mut rng);
    MiningOutcome::Tuple(ContrastiveTuple { lacks_negatives: negatives.is_empty(), positives, negatives })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketSize {
    /// Baseline over treatment precision.
    pub gain: f64,
    /// Adjusted sample count `proportion · gain`.
    pub size: f64,
}

/// Upsamples buckets where the treatment lags the baseline.
pub fn bucket_resize(bucket: &QueryBucket) -> Result<BucketSize, RetrievalError> {
    if bucket.treatment_p10 == 0.0 {
        return Err(RetrievalError::UndefinedRatio(format!("bucket {}: treatment precision is 0", bucket.bucket_id)));
    }
    for p in [bucket.baseline_p10, bucket.treatment_p10] {
        if !(p > 0.0 && p <= 1.0) {
            return Err(RetrievalError::Input(format!("bucket {}: precision {p} outside (0, 1]", bucket.bucket_id)));
        }
    }
    if !(bucket.proportion >= 0.0) || !bucket.proportion.is_finite() {
        return Err(RetrievalError::Input(format!("bucket {}: bad proportion", bucket.bucket_id)));
    }
    let gain = bucket.baseline_p10 / bucket.treatment_p10;
    Ok(BucketSize { gain, size: bucket.proportion * gain })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cands(grades: &[u8]) -> Vec<GradedCandidate> {
        grades
            .iter()
            .enumerate()
            .map(|(i, &g)| GradedCandidate { doc_id: 100 + i as u64, grade: g, rank: i + 1 })
            .collect()
    }

    #[test]
    fn enumerated_rule() {
        let c = cands(&[4, 2, 1, 3, 2]);
        for seed in 0..20 {
            let MiningOutcome::Tuple(t) = mine_hard_negatives(&c, 10, seed) else { panic!() };
            assert_eq!(t.positives, vec![100, 103]);
            assert_eq!(t.negatives, vec![101, 102, 104]);
        }
    }

    #[test]
    fn bounds_and_signals() {
        let MiningOutcome::Tuple(t) = mine_hard_negatives(&cands(&[4, 4, 4]), 10, 1) else { panic!() };
        assert!(t.lacks_negatives && t.negatives.is_empty() && t.positives.len() == 2);
        assert_eq!(mine_hard_negatives(&cands(&[1, 2, 2]), 10, 1), MiningOutcome::SkipQuery);
        let many = cands(&[3, 1, 4, 2, 1, 2, 3, 1, 1, 2, 4, 1]);
        let MiningOutcome::Tuple(a) = mine_hard_negatives(&many, 4, 9) else { panic!() };
        assert!(a.positives.len() == 2 && a.negatives.len() == 3);
        // Only the first four non-relevant candidates are eligible.
        assert!(a.negatives.iter().all(|d| [101, 103, 104, 105].contains(d)));
        assert_eq!(mine_hard_negatives(&many, 4, 9), mine_hard_negatives(&many, 4, 9));
    }

    #[test]
    fn resize_arithmetic() {
        let b = |base, treat| QueryBucket {
            bucket_id: "b".into(),
            proportion: 1000.0,
            baseline_p10: base,
            treatment_p10: treat,
        };
        assert!((bucket_resize(&b(0.5, 0.4)).unwrap().size - 1250.0).abs() < 1e-9);
        assert_eq!(bucket_resize(&b(0.4, 0.4)).unwrap(), BucketSize { gain: 1.0, size: 1000.0 });
        assert!(bucket_resize(&b(0.4, 0.5)).unwrap().size < 1000.0);
        assert!(matches!(bucket_resize(&b(0.4, 0.0)), Err(RetrievalError::UndefinedRatio(_))));
    }
}
