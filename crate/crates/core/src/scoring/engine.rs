use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::flops::FlopReport;
use super::plan::plan_batches;
use super::{ScoreMode, ScoringError};
use crate::model::{
    multi_head_scores, prefill_into, AttentionMask, KvCache, ModelWeights, MultiItemMask, PrefillInput,
};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum ItemPayload<T> {
    Tokens(Vec<u32>),
    /// Vectors injected in place of token embeddings, each `d_model` long.
    Embeddings(Vec<Vec<T>>),
}

impl<T> ItemPayload<T> {
    pub fn len(&self) -> usize {
        match self {
            ItemPayload::Tokens(t) => t.len(),
            ItemPayload::Embeddings(e) => e.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn as_input(&self) -> PrefillInput<'_, T> {
        match self {
            ItemPayload::Tokens(t) => PrefillInput::Tokens(t),
            ItemPayload::Embeddings(e) => PrefillInput::Embeddings(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreItem<T> {
    pub id: String,
    pub payload: ItemPayload<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRequest<T> {
    pub request_id: String,
    pub prefix_tokens: Vec<u32>,
    pub items: Vec<ScoreItem<T>>,
    pub mode: ScoreMode,
    pub latency_sensitive: bool,
}

impl<T> ScoreRequest<T> {
    pub fn item_lens(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.payload.len()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore<T> {
    pub item_id: String,
    pub tasks: BTreeMap<String, T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreResult<T> {
    pub scores: Vec<ItemScore<T>>,
    pub mode: ScoreMode,
    pub flops: FlopReport,
    /// Positions each item added on top of whatever KV state it reused.
    pub incremental_kv_lens: Vec<usize>,
}

fn validate<T: Scalar>(
    weights: &ModelWeights<T>,
    request: &ScoreRequest<T>,
    token_only: bool,
) -> Result<(), ScoringError> {
    if request.items.is_empty() {
        return Err(ScoringError::Request("request has no items".into()));
    }
    if request.prefix_tokens.is_empty() {
        return Err(ScoringError::Request("prefix must be non-empty".into()));
    }
    let cfg = &weights.config;
    let check_tokens = |tokens: &[u32]| {
        tokens.iter().find(|&&t| t as usize >= cfg.vocab_size).map_or(Ok(()), |&t| {
            Err(ScoringError::Payload(format!("token id {t} out of range for vocab {}", cfg.vocab_size)))
        })
    };
    check_tokens(&request.prefix_tokens)?;
    for (i, item) in request.items.iter().enumerate() {
        if item.payload.is_empty() {
            return Err(ScoringError::EmptyItem(i));
        }
        match &item.payload {
            ItemPayload::Tokens(t) => check_tokens(t)?,
            ItemPayload::Embeddings(_) if token_only => {
                return Err(ScoringError::Payload(format!(
                    "item '{}' carries embeddings but mode {} takes tokens",
                    item.id, request.mode
                )))
            }
            ItemPayload::Embeddings(rows) => {
                if let Some(bad) = rows.iter().find(|r| r.len() != cfg.d_model) {
                    return Err(ScoringError::Payload(format!(
                        "item '{}' has an embedding token of dimension {}, expected {}",
                        item.id,
                        bad.len(),
                        cfg.d_model
                    )));
                }
            }
        }
    }
    Ok(())
}

fn item_score<T: Scalar>(weights: &ModelWeights<T>, id: &str, hidden: &[T]) -> ItemScore<T> {
    ItemScore { item_id: id.to_string(), tasks: multi_head_scores(hidden, weights) }
}

/// One independent prefill of `prefix ++ item` per item.
pub fn score_naive<T: Scalar>(
    weights: &ModelWeights<T>,
    request: &ScoreRequest<T>,
) -> Result<ScoreResult<T>, ScoringError> {
    validate(weights, request, true)?;
    let tq = request.prefix_tokens.len();
    let mut scores = Vec::with_capacity(request.items.len());
    let mut kv_lens = Vec::with_capacity(request.items.len());
    for item in &request.items {
        let ItemPayload::Tokens(tokens) = &item.payload else { unreachable!("validated") };
        let mut seq = Vec::with_capacity(tq + tokens.len());
        seq.extend_from_slice(&request.prefix_tokens);
        seq.extend_from_slice(tokens);
        let mut cache = KvCache::new(weights);
        let hidden = prefill_into(weights, PrefillInput::Tokens(&seq), &mut cache, None)?;
        scores.push(item_score(weights, &item.id, hidden.row(hidden.rows - 1)));
        kv_lens.push(cache.seq_len());
    }
    Ok(ScoreResult {
        scores,
        mode: ScoreMode::Naive,
        flops: FlopReport::for_lengths(ScoreMode::Naive, tq, &request.item_lens()),
        incremental_kv_lens: kv_lens,
    })
}

fn score_on_shared_prefix<T: Scalar>(
    weights: &ModelWeights<T>,
    request: &ScoreRequest<T>,
    mode: ScoreMode,
) -> Result<ScoreResult<T>, ScoringError> {
    let tq = request.prefix_tokens.len();
    let mut cache = KvCache::new(weights);
    prefill_into(weights, PrefillInput::Tokens(&request.prefix_tokens), &mut cache, None)?;
    let mut scores = Vec::with_capacity(request.items.len());
    let mut kv_lens = Vec::with_capacity(request.items.len());
    for item in &request.items {
        let hidden = prefill_into(weights, item.payload.as_input(), &mut cache, None)?;
        scores.push(item_score(weights, &item.id, hidden.row(hidden.rows - 1)));
        kv_lens.push(cache.seq_len() - tq);
        cache.truncate(tq);
    }
    Ok(ScoreResult {
        scores,
        mode,
        flops: FlopReport::for_lengths(mode, tq, &request.item_lens()),
        incremental_kv_lens: kv_lens,
    })
}

/// Prefix prefilled once; each item extends the shared cache and is rolled back.
pub fn score_ibpc<T: Scalar>(
    weights: &ModelWeights<T>,
    request: &ScoreRequest<T>,
) -> Result<ScoreResult<T>, ScoringError> {
    validate(weights, request, true)?;
    score_on_shared_prefix(weights, request, ScoreMode::Ibpc)
}

/// Like [`score_ibpc`], but items may carry embedding vectors instead of tokens.
pub fn score_mixed<T: Scalar>(
    weights: &ModelWeights<T>,
    request: &ScoreRequest<T>,
) -> Result<ScoreResult<T>, ScoringError> {
    validate(weights, request, false)?;
    score_on_shared_prefix(weights, request, ScoreMode::Mixed)
}

/// Span layout for `prefix ++ item_1 ++ … ++ item_N`.
pub fn build_multi_item_mask(prefix_len: usize, item_lens: &[usize]) -> Result<MultiItemMask, ScoringError> {
    let mut spans = Vec::with_capacity(item_lens.len());
    let mut start = prefix_len;
    for (i, &len) in item_lens.iter().enumerate() {
        if len == 0 {
            return Err(ScoringError::EmptyItem(i));
        }
        spans.push((start, start + len));
        start += len;
    }
    Ok(MultiItemMask { prefix_len, spans })
}

/// Single masked prefill over the prefix followed by every item; each item's
/// score is read at the last position of its span.
pub fn score_multi_item<T: Scalar>(
    weights: &ModelWeights<T>,
    request: &ScoreRequest<T>,
) -> Result<ScoreResult<T>, ScoringError> {
    validate(weights, request, true)?;
    let tq = request.prefix_tokens.len();
    let lens = request.item_lens();
    let max_seq = weights.config.max_seq;
    let total = tq + lens.iter().sum::<usize>();
    if total > max_seq {
        let mut used = tq;
        let items_per_pass = lens.iter().take_while(|&&l| {
            used += l;
            used <= max_seq
        });
        return Err(ScoringError::SplitRequired { len: total, max_seq, items_per_pass: items_per_pass.count() });
    }
    let mask = build_multi_item_mask(tq, &lens)?;
    let mut seq = Vec::with_capacity(total);
    seq.extend_from_slice(&request.prefix_tokens);
    for item in &request.items {
        let ItemPayload::Tokens(t) = &item.payload else { unreachable!("validated") };
        seq.extend_from_slice(t);
    }
    let mut cache = KvCache::new(weights);
    let hidden =
        prefill_into(weights, PrefillInput::Tokens(&seq), &mut cache, Some(&AttentionMask::MultiItem(mask.clone())))?;
    let scores = request
        .items
        .iter()
        .zip(&mask.spans)
        .map(|(item, &(_, end))| item_score(weights, &item.id, hidden.row(end - 1)))
        .collect();
    Ok(ScoreResult {
        scores,
        mode: ScoreMode::MultiItem,
        flops: FlopReport::for_lengths(ScoreMode::MultiItem, tq, &lens),
        incremental_kv_lens: lens,
    })
}

/// Shared, immutable weights plus mode dispatch. Multi-item requests that do
/// not fit in one sequence are re-batched into several passes.
#[derive(Debug, Clone)]
pub struct ScoringEngine<T> {
    weights: Arc<ModelWeights<T>>,
}

impl<T: Scalar> ScoringEngine<T> {
    pub fn new(weights: Arc<ModelWeights<T>>) -> Self {
        Self { weights }
    }

    pub fn weights(&self) -> &ModelWeights<T> {
        &self.weights
    }

    pub fn score(&self, request: &ScoreRequest<T>) -> Result<ScoreResult<T>, ScoringError> {
        let w = &*self.weights;
        match request.mode {
            ScoreMode::Naive => score_naive(w, request),
            ScoreMode::Ibpc => score_ibpc(w, request),
            ScoreMode::Mixed => score_mixed(w, request),
            ScoreMode::MultiItem => match score_multi_item(w, request) {
                Err(ScoringError::SplitRequired { .. }) => self.score_multi_item_split(request),
                other => other,
            },
        }
    }

    fn score_multi_item_split(&self, request: &ScoreRequest<T>) -> Result<ScoreResult<T>, ScoringError> {
        let plan = plan_batches(std::slice::from_ref(request), self.weights.config.max_seq)?;
        let mut merged = ScoreResult {
            scores: Vec::with_capacity(request.items.len()),
            mode: ScoreMode::MultiItem,
            flops: FlopReport::default(),
            incremental_kv_lens: Vec::with_capacity(request.items.len()),
        };
        for batch in plan {
            for slice in batch.slices {
                let part = ScoreRequest { items: request.items[slice.items].to_vec(), ..request.clone() };
                let r = score_multi_item(&self.weights, &part)?;
                merged.scores.extend(r.scores);
                merged.incremental_kv_lens.extend(r.incremental_kv_lens);
                merged.flops.accumulate(&r.flops);
            }
        }
        Ok(merged)
    }
}
