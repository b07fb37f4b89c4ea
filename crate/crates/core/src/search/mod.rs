//! The query path behind `/search`: embed or look up the query, filter and
//! retrieve, pick a scoring depth, probe the score cache, score misses with
//! the engine, calibrate, blend and sort.
//!
//! The stage functions in [`stages`] are public so offline tools can run the
//! same path one step at a time.

mod service;
pub mod stages;

pub use service::{HealthRecord, SearchService, ServiceAssets};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::CalibrationError;
use crate::midtier::{MidtierError, PidConfig, RetryPolicy};
use crate::model::{ModelError, RELEVANCE_TASK};
use crate::retrieval::{DocId, RetrievalError};
use crate::scoring::wire::WireFlops;
use crate::scoring::{ScoreMode, ScoringError};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid request: {0}")]
    Request(String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Midtier(#[from] MidtierError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DepthPolicy {
    Fixed {
        depth: usize,
    },
    /// Depth follows the latency controller.
    Pid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub mode: ScoreMode,
    pub depth: DepthPolicy,
    /// Candidates kept from exhaustive retrieval.
    pub retrieval_k: usize,
    pub system_prompt: String,
    /// Render document features into the item prompt.
    pub prompt_features: bool,
    /// Final score weights over calibrated task probabilities.
    pub blend: BTreeMap<String, f64>,
    pub cache_capacity: usize,
    pub model_version: String,
    pub pid: PidConfig,
    pub target_latency_ms: f64,
    pub retry: RetryPolicy,
    /// Share of cache hits re-scored and compared against the stored value.
    pub shadow_fraction: f64,
    /// Request latencies kept for the rolling percentiles.
    pub latency_window: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            mode: ScoreMode::Ibpc,
            depth: DepthPolicy::Pid,
            retrieval_k: 250,
            system_prompt: "You judge whether a job posting matches a search.\n".into(),
            prompt_features: false,
            blend: [(RELEVANCE_TASK.to_string(), 1.0)].into(),
            cache_capacity: 100_000,
            model_version: "toy-v1".into(),
            pid: PidConfig::default(),
            target_latency_ms: 500.0,
            retry: RetryPolicy { per_attempt_timeout_ms: 5_000.0, budget_ms: 15_000.0, max_attempts: 2 },
            shadow_fraction: 0.01,
            latency_window: 1000,
        }
    }
}

fn default_page_size() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub searcher_id: String,
    pub query: String,
    #[serde(default)]
    pub filters: BTreeMap<String, BTreeSet<String>>,
    #[serde(default = "default_page_size")]
    pub page_size: usize,
    #[serde(default)]
    pub latency_sensitive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub doc_id: DocId,
    pub rank: usize,
    /// `None` for candidates past the scoring depth or in fallback.
    pub final_score: Option<f64>,
    pub calibrated: BTreeMap<String, f64>,
    pub raw: BTreeMap<String, f32>,
    pub retrieval_score: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryEmbeddingSource {
    Fixture,
    /// Hashing projection of the query words.
    Hashed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub depth_used: usize,
    pub candidates: usize,
    pub scored: usize,
    pub cache_hits: usize,
    pub cache_misses: usize,
    pub flops: WireFlops,
    pub stage_latency_ms: BTreeMap<String, f64>,
    pub query_embedding: QueryEmbeddingSource,
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
    pub model_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub results: Vec<SearchHit>,
    pub diagnostics: Diagnostics,
}
