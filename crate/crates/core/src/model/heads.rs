use std::collections::BTreeMap;

use super::weights::ModelWeights;
use crate::scalar::logistic;
use crate::Scalar;

/// Task name under which the Yes/No relevance probability is reported.
pub const RELEVANCE_TASK: &str = "relevance";

/// `P(yes)` restricted to the two answer tokens: `e^{l_yes} / (e^{l_yes} + e^{l_no})`.
pub fn yes_no_probability<T: Scalar>(logits: &[T], yes_id: u32, no_id: u32) -> T {
    logistic(logits[yes_id as usize] - logits[no_id as usize])
}

/// The two answer-token logits for a final hidden state, without projecting
/// onto the rest of the vocabulary.
pub fn relevance_logits<T: Scalar>(hidden: &[T], weights: &ModelWeights<T>) -> (T, T) {
    let cfg = &weights.config;
    (
        weights.output.column_dot(hidden, cfg.yes_token_id as usize),
        weights.output.column_dot(hidden, cfg.no_token_id as usize),
    )
}

/// Relevance from the Yes/No logits plus one probability per task head.
pub fn multi_head_scores<T: Scalar>(hidden: &[T], weights: &ModelWeights<T>) -> BTreeMap<String, T> {
    let mut out = BTreeMap::new();
    let (yes, no) = relevance_logits(hidden, weights);
    out.insert(RELEVANCE_TASK.to_string(), logistic(yes - no));
    for head in &weights.heads {
        let logits: Vec<T> = (0..head.weight.cols).map(|c| head.weight.column_dot(hidden, c) + head.bias[c]).collect();
        let p = match logits.as_slice() {
            [z] => logistic(*z),
            [z0, z1] => logistic(*z1 - *z0),
            _ => unreachable!("head arity validated by config"),
        };
        out.insert(head.task.clone(), p);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn yes_no_values() {
        let mut logits = vec![0.0f64; 300];
        assert_eq!(yes_no_probability(&logits, 264, 265), 0.5);
        logits[264] = 2.0;
        assert!((yes_no_probability(&logits, 264, 265) - 0.880797).abs() < 1e-4);
        logits[264] = 1000.0;
        assert_eq!(yes_no_probability(&logits, 264, 265), 1.0);
        logits[264] = 0.0;
        logits[265] = 1000.0;
        assert_eq!(yes_no_probability(&logits, 264, 265), 0.0);
    }

    #[test]
    fn zero_hidden_gives_half() {
        let w = init_model::<f32>(&ModelConfig { max_seq: 8, ..ModelConfig::default() }, 1).unwrap();
        let scores = multi_head_scores(&vec![0.0; 64], &w);
        assert_eq!(scores.len(), 6);
        assert!(scores.values().all(|&p| p == 0.5));
    }

    #[test]
    fn outputs_in_open_unit_interval() {
        let w = init_model::<f64>(&ModelConfig { max_seq: 8, ..ModelConfig::default() }, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let h: Vec<f64> = (0..64).map(|_| rng.random_range(-3.0..3.0)).collect();
            let s = multi_head_scores(&h, &w);
            assert!(s.values().all(|&p| p > 0.0 && p < 1.0));
            assert_eq!(s, multi_head_scores(&h, &w));
        }
    }
}
