use std::ops::Range;

use super::engine::ScoreRequest;
use super::ScoringError;

/// A contiguous run of one request's items inside a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchSlice {
    pub request: usize,
    pub items: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Batch {
    pub slices: Vec<BatchSlice>,
    /// Prefix tokens (once per request slice) plus item tokens.
    pub tokens: usize,
}

/// Greedy packing of requests into batches of at most `max_batch_tokens`.
///
/// Requests and their items keep their order. Every slice of a request pays
/// for its prefix once.
pub fn plan_batches<T>(requests: &[ScoreRequest<T>], max_batch_tokens: usize) -> Result<Vec<Batch>, ScoringError> {
    for r in requests {
        let tq = r.prefix_tokens.len();
        if let Some(longest) = r.items.iter().map(|i| i.payload.len()).max() {
            if tq + longest > max_batch_tokens {
                return Err(ScoringError::Oversize { tokens: tq + longest, budget: max_batch_tokens });
            }
        }
    }
    let mut batches = Vec::new();
    let mut current = Batch::default();
    for (ri, r) in requests.iter().enumerate() {
        let tq = r.prefix_tokens.len();
        for (ii, item) in r.items.iter().enumerate() {
            let ti = item.payload.len();
            let extends = matches!(current.slices.last(), Some(s) if s.request == ri);
            let cost = if extends { ti } else { tq + ti };
            if current.tokens + cost > max_batch_tokens && !current.slices.is_empty() {
                batches.push(std::mem::take(&mut current));
                current.slices.push(BatchSlice { request: ri, items: ii..ii + 1 });
                current.tokens = tq + ti;
                continue;
            }
            current.tokens += cost;
            match current.slices.last_mut() {
                Some(s) if extends => s.items.end = ii + 1,
                _ => current.slices.push(BatchSlice { request: ri, items: ii..ii + 1 }),
            }
        }
    }
    if !current.slices.is_empty() {
        batches.push(current);
    }
    Ok(batches)
}
