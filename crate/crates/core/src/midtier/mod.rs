//! Serving-side controls and the load simulator that exercises them.

mod cache;
mod pid;
mod retry;
mod shaping;
mod sim;

pub use cache::{normalize_query, query_signature, CacheKey, CacheStats, ScoreCache, SharedScoreCache, TaskScores};
pub use pid::{pid_update, PidConfig, PidState};
pub use retry::{retry_decision, RetryDecision, RetryPolicy};
pub use shaping::{shape_traffic, Shaped};
pub use sim::{
    fit_cost_model, run_simulation, ArrivalProcess, CacheModel, ClassStats, IntervalRecord, LenRange, ServiceModel,
    SimConfig, SimMetrics, SimOutput, SimToggles,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MidtierError {
    #[error("cache consistency: a key was stored twice with different scores")]
    CacheConsistency,
    #[error("invalid configuration: {0}")]
    Config(String),
}
