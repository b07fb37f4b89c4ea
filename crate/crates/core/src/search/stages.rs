//! Individual steps of the query path.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{SearchConfig, SearchError, SearchHit};
use crate::calibration::{calibrate, CalibrationArtifact, CalibrationHead};
use crate::midtier::normalize_query;
use crate::model::{build_prompt, ByteTokenizer, ModelWeights};
use crate::retrieval::{DocumentRecord, ScoredDoc};
use crate::scoring::{ItemPayload, ScoreItem, ScoreMode, ScoreRequest};

/// Deterministic stand-in for a query encoder: the normalized sum of one
/// seeded Gaussian vector per lowercase word.
pub fn hash_embedding(text: &str, dim: usize) -> Result<Vec<f32>, SearchError> {
    let normalized = normalize_query(text);
    if normalized.is_empty() || dim == 0 {
        return Err(SearchError::Request("cannot embed an empty query".into()));
    }
    let mut acc = vec![0.0f64; dim];
    for word in normalized.split(' ') {
        let digest = Sha256::digest(word.as_bytes());
        let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for a in acc.iter_mut() {
            *a += Distribution::<f64>::sample(&StandardNormal, &mut rng);
        }
    }
    let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(acc.iter().map(|x| (x / norm) as f32).collect())
}

pub fn query_context(query: &str) -> String {
    format!("Query: {query}\n")
}

pub fn document_text(doc: &DocumentRecord<f32>, with_features: bool) -> String {
    let mut out = format!("Document: {}", doc.text.as_deref().unwrap_or(""));
    if with_features {
        for (name, v) in &doc.features {
            out.push_str(&format!("\n{name}: {v:.2}"));
        }
    }
    out
}

/// One engine request scoring `docs` against the query prompt. Mixed mode
/// sends each item as its token embeddings.
pub fn build_score_request(
    tokenizer: &ByteTokenizer,
    weights: &ModelWeights<f32>,
    config: &SearchConfig,
    request_id: &str,
    query: &str,
    docs: &[&DocumentRecord<f32>],
    mode: ScoreMode,
) -> Result<ScoreRequest<f32>, SearchError> {
    let context = query_context(query);
    let mut prefix_tokens = Vec::new();
    let mut items = Vec::with_capacity(docs.len());
    for doc in docs {
        let parts =
            build_prompt(tokenizer, &config.system_prompt, &context, &document_text(doc, config.prompt_features))?;
        let payload = match mode {
            ScoreMode::Mixed => ItemPayload::Embeddings(weights.embed_tokens(&parts.item_tokens)?),
            _ => ItemPayload::Tokens(parts.item_tokens),
        };
        prefix_tokens = parts.prefix_tokens;
        items.push(ScoreItem { id: doc.doc_id.to_string(), payload });
    }
    Ok(ScoreRequest { request_id: request_id.to_string(), prefix_tokens, items, mode, latency_sensitive: false })
}

/// Global calibration head per task in the artifact.
pub fn calibration_heads(
    artifact: &CalibrationArtifact,
) -> Result<BTreeMap<String, CalibrationHead<f64>>, SearchError> {
    artifact.tasks().into_iter().map(|t| Ok((t.clone(), artifact.position::<f64>(&t)?.global))).collect()
}

/// Tasks without a head pass through unchanged.
pub fn calibrate_tasks(
    heads: &BTreeMap<String, CalibrationHead<f64>>,
    raw: &BTreeMap<String, f32>,
) -> Result<BTreeMap<String, f64>, SearchError> {
    raw.iter()
        .map(|(task, &s)| {
            let p = match heads.get(task) {
                Some(h) => calibrate(h, s as f64)?,
                None => s as f64,
            };
            Ok((task.clone(), p))
        })
        .collect()
}

pub fn blend(weights: &BTreeMap<String, f64>, calibrated: &BTreeMap<String, f64>) -> f64 {
    weights.iter().map(|(task, w)| w * calibrated.get(task).copied().unwrap_or(0.0)).sum()
}

/// Raw task scores, calibrated probabilities and the blended final score.
pub type ScoredTasks = (BTreeMap<String, f32>, BTreeMap<String, f64>, f64);

/// Scored candidates by final score (doc id breaks ties), then the unscored
/// rest in retrieval order; ranks start at 1.
pub fn order_results(candidates: &[ScoredDoc<f32>], scored: Vec<ScoredTasks>, page_size: usize) -> Vec<SearchHit> {
    let n = scored.len();
    let mut hits: Vec<SearchHit> = candidates
        .iter()
        .zip(scored)
        .map(|(c, (raw, calibrated, score))| SearchHit {
            doc_id: c.doc_id,
            rank: 0,
            final_score: Some(score),
            calibrated,
            raw,
            retrieval_score: c.score,
        })
        .collect();
    hits.sort_by(|a, b| {
        b.final_score
            .unwrap_or(f64::NEG_INFINITY)
            .total_cmp(&a.final_score.unwrap_or(f64::NEG_INFINITY))
            .then(a.doc_id.cmp(&b.doc_id))
    });
    hits.extend(candidates[n..].iter().map(|c| SearchHit {
        doc_id: c.doc_id,
        rank: 0,
        final_score: None,
        calibrated: BTreeMap::new(),
        raw: BTreeMap::new(),
        retrieval_score: c.score,
    }));
    hits.truncate(page_size);
    for (i, h) in hits.iter_mut().enumerate() {
        h.rank = i + 1;
    }
    hits
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashed_embedding_is_stable_and_unit() {
        let a = hash_embedding("Senior  Rust Engineer", 32).unwrap();
        let b = hash_embedding("senior rust engineer", 32).unwrap();
        assert_eq!(a, b);
        let n: f64 = a.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-6);
        assert!(hash_embedding("   ", 32).is_err());
    }

    #[test]
    fn ordering_puts_unscored_last() {
        let cands: Vec<ScoredDoc<f32>> =
            [(5, 0.9), (3, 0.8), (9, 0.7), (1, 0.6)].iter().map(|&(d, s)| ScoredDoc { doc_id: d, score: s }).collect();
        let s = |v| (BTreeMap::new(), BTreeMap::new(), v);
        let hits = order_results(&cands, vec![s(0.2), s(0.7), s(0.7)], 10);
        assert_eq!(hits.iter().map(|h| h.doc_id).collect::<Vec<_>>(), vec![3, 9, 5, 1]);
        assert_eq!(hits[3].final_score, None);
        assert_eq!(hits.iter().map(|h| h.rank).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert_eq!(order_results(&cands, vec![], 2).len(), 2);
    }
}
