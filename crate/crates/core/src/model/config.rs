use serde::{Deserialize, Serialize};

use super::tokenizer::special;
use super::ModelError;

/// A task head on the final hidden state. Arity 1 is a logistic output;
/// arity 2 is a two-way softmax whose second class is reported.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub task: String,
    pub arity: usize,
}

impl HeadSpec {
    pub fn binary(task: &str) -> Self {
        Self { task: task.to_string(), arity: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq: usize,
    pub yes_token_id: u32,
    pub no_token_id: u32,
    pub head_specs: Vec<HeadSpec>,
}

/// Engagement tasks scored by the default model.
pub const DEFAULT_ENGAGEMENT_TASKS: [&str; 5] = ["click", "apply", "badfit", "shortlist", "dismiss"];

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_layers: 2,
            d_model: 64,
            n_heads: 4,
            d_ff: 256,
            vocab_size: 300,
            max_seq: 4096,
            yes_token_id: special::YES,
            no_token_id: special::NO,
            head_specs: DEFAULT_ENGAGEMENT_TASKS.iter().map(|t| HeadSpec::binary(t)).collect(),
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.n_layers == 0 || self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return fail("layer, width, head and ff counts must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return fail(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.yes_token_id == self.no_token_id {
            return fail("yes_token_id must differ from no_token_id".into());
        }
        let vocab = self.vocab_size;
        if self.yes_token_id as usize >= vocab || self.no_token_id as usize >= vocab {
            return fail(format!("yes/no token ids must be < vocab_size {vocab}"));
        }
        if vocab < special::FIRST_FREE as usize {
            return fail(format!("vocab_size must cover bytes and specials (>= {})", special::FIRST_FREE));
        }
        if self.max_seq == 0 {
            return fail("max_seq must be >= 1".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for h in &self.head_specs {
            if !(1..=2).contains(&h.arity) {
                return fail(format!("head '{}' has unsupported arity {}", h.task, h.arity));
            }
            if h.task == super::RELEVANCE_TASK || !seen.insert(h.task.as_str()) {
                return fail(format!("duplicate or reserved head name '{}'", h.task));
            }
        }
        Ok(())
    }
}
