//! Prefill-only scoring of one prefix against many items.
//!
//! Four execution modes produce the same per-item task probabilities:
//! `Naive` prefills `prefix ++ item` for every item, `Ibpc` prefills the
//! prefix once and extends a shared KV cache per item, `MultiItem` packs all
//! items into one masked sequence, and `Mixed` feeds caller-supplied
//! embedding vectors in place of item tokens.

mod engine;
mod flops;
mod plan;
pub mod wire;

pub use engine::{
    build_multi_item_mask, score_ibpc, score_mixed, score_multi_item, score_naive, ItemPayload, ItemScore, ScoreItem,
    ScoreRequest, ScoreResult, ScoringEngine,
};
pub use flops::{flops, FlopReport};
pub use plan::{plan_batches, Batch, BatchSlice};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    Naive,
    Ibpc,
    #[serde(alias = "multi-item")]
    MultiItem,
    Mixed,
}

impl ScoreMode {
    pub const ALL: [ScoreMode; 4] = [ScoreMode::Naive, ScoreMode::Ibpc, ScoreMode::MultiItem, ScoreMode::Mixed];

    /// Whether the prefix is computed once per request.
    pub fn is_amortized(self) -> bool {
        !matches!(self, ScoreMode::Naive)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMode::Naive => "naive",
            ScoreMode::Ibpc => "ibpc",
            ScoreMode::MultiItem => "multi_item",
            ScoreMode::Mixed => "mixed",
        }
    }
}

impl std::str::FromStr for ScoreMode {
    type Err = ScoringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" => Ok(ScoreMode::Naive),
            "ibpc" => Ok(ScoreMode::Ibpc),
            "multi-item" | "multi_item" => Ok(ScoreMode::MultiItem),
            "mixed" => Ok(ScoreMode::Mixed),
            other => Err(ScoringError::Request(format!("unknown mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid request: {0}")]
    Request(String),
    #[error("payload error: {0}")]
    Payload(String),
    #[error(
        "concatenated length {len} exceeds max_seq {max_seq}; re-batch with at most {items_per_pass} items per pass"
    )]
    SplitRequired { len: usize, max_seq: usize, items_per_pass: usize },
    #[error("item of {tokens} tokens exceeds the batch budget of {budget}")]
    Oversize { tokens: usize, budget: usize },
    #[error("items must be non-empty, item {0} has length 0")]
    EmptyItem(usize),
}
