use serde::{Deserialize, Serialize};

use super::MidtierError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub per_attempt_timeout_ms: f64,
    pub budget_ms: f64,
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { per_attempt_timeout_ms: 200.0, budget_ms: 500.0, max_attempts: 3 }
    }
}

impl RetryPolicy {
    pub fn validate(&self) -> Result<(), MidtierError> {
        if self.max_attempts == 0 {
            return Err(MidtierError::Config("max_attempts must be at least 1".into()));
        }
        if !(self.per_attempt_timeout_ms > 0.0) || self.per_attempt_timeout_ms > self.budget_ms {
            return Err(MidtierError::Config(format!(
                "per-attempt timeout {} must be in (0, budget {}]",
                self.per_attempt_timeout_ms, self.budget_ms
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetryDecision {
    Proceed,
    Retry,
    /// Serve the retrieval-order fallback.
    GiveUp,
}

/// `attempt` is the 0-based index of the attempt about to start.
pub fn retry_decision(elapsed_ms: f64, attempt: u32, policy: &RetryPolicy) -> RetryDecision {
    if attempt == 0 {
        return if elapsed_ms < policy.budget_ms { RetryDecision::Proceed } else { RetryDecision::GiveUp };
    }
    if attempt < policy.max_attempts && elapsed_ms + policy.per_attempt_timeout_ms <= policy.budget_ms {
        RetryDecision::Retry
    } else {
        RetryDecision::GiveUp
    }
}
