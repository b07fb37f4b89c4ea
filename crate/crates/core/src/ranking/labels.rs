use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RankingError;
use crate::scalar::logistic;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftLabelMode {
    Linear,
    Sigmoid,
}

/// Maps ordinal grades 1..=4 to training targets in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftLabelMap {
    pub mode: SoftLabelMode,
    pub steepness: f64,
    /// Midpoint of the sigmoid; 2.5 sits between the last negative and first positive grade.
    pub center: f64,
}

impl Default for SoftLabelMap {
    fn default() -> Self {
        Self { mode: SoftLabelMode::Sigmoid, steepness: 2.0, center: 2.5 }
    }
}

impl SoftLabelMap {
    pub fn linear() -> Self {
        Self { mode: SoftLabelMode::Linear, ..Self::default() }
    }
}

pub fn soft_label_map<T: Scalar>(grade: u8, map: &SoftLabelMap) -> Result<T, RankingError> {
    if !(1..=4).contains(&grade) {
        return Err(RankingError::Parameter(format!("grade {grade} outside 1..=4")));
    }
    let g = T::lit(grade as f64);
    Ok(match map.mode {
        SoftLabelMode::Linear => (g - T::one()) / T::lit(3.0),
        SoftLabelMode::Sigmoid => logistic(T::lit(map.steepness) * (g - T::lit(map.center))),
    })
}

/// Pairs for the pairwise ranking loss.
///
/// `scored` is in retrieval order. The pool is the first `k` documents plus
/// `k` sampled (under `seed`) from the remainder; every pool pair with
/// different oracle scores is emitted higher-first, in pool order.
pub fn build_ranking_pairs<D: Clone, T: Scalar>(
    scored: &[(D, T)],
    k: usize,
    seed: u64,
) -> Result<Vec<(D, D)>, RankingError> {
    if scored.len() < 2 {
        return Err(RankingError::Input("need at least two documents to form pairs".into()));
    }
    let top = k.min(scored.len());
    let mut rest: Vec<usize> = (top..scored.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rest.shuffle(&mut rng);
    rest.truncate(k);
    rest.sort_unstable();
    let pool: Vec<usize> = (0..top).chain(rest).collect();

    let mut pairs = Vec::new();
    for (a, &i) in pool.iter().enumerate() {
        for &j in &pool[a + 1..] {
            let (si, sj) = (scored[i].1, scored[j].1);
            if si > sj {
                pairs.push((scored[i].0.clone(), scored[j].0.clone()));
            } else if sj > si {
                pairs.push((scored[j].0.clone(), scored[i].0.clone()));
            }
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub length_penalty: f64,
    pub quality_weight: f64,
}

/// Summary reward: zero unless the downstream prediction was correct, then
/// `1 - λ_len·ℓ + λ_qual·q`.
pub fn summarization_reward<T: Scalar>(correct: bool, length: T, quality: T, params: &RewardParams) -> T {
    if !correct {
        return T::zero();
    }
    T::one() - T::lit(params.length_penalty) * length + T::lit(params.quality_weight) * quality
}
