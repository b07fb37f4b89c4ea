//! Deterministic toy decoder-only transformer used as the scoring substrate.
//!
//! Pre-norm blocks, GELU MLP, learned absolute positions and a byte-level
//! tokenizer. Only prefill is supported: there is no decoding loop.

mod config;
mod forward;
mod heads;
mod io;
mod mask;
mod prompt;
mod tensor;
mod tokenizer;
mod weights;

pub use config::{HeadSpec, ModelConfig};
pub use forward::{prefill, prefill_into, KvCache, PrefillInput, PrefillOutput};
pub use heads::{multi_head_scores, relevance_logits, yes_no_probability, RELEVANCE_TASK};
pub use io::{load_weights, save_weights, WEIGHT_FILE_MAGIC, WEIGHT_FILE_VERSION};
pub use mask::{AttentionMask, DenseMask, MultiItemMask};
pub use prompt::{
    build_prompt, format_numeric_features, FeatureKind, FeatureValue, NumericFeature, NumericFeatureSpec, PromptParts,
    ITEM_SUFFIX,
};
pub use tensor::Matrix;
pub use tokenizer::{special, ByteTokenizer, TokenId};
pub use weights::{init_model, LayerWeights, ModelWeights, TaskHead};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("sequence of {len} tokens exceeds max_seq {max_seq}")]
    Length { len: usize, max_seq: usize },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("malformed attention mask: {0}")]
    Mask(String),
    #[error("token id {id} out of range for vocab {vocab}")]
    Token { id: u32, vocab: usize },
    #[error("embedding token has dimension {got}, expected {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("numeric feature error: {0}")]
    Feature(String),
    #[error("prompt error: {0}")]
    Prompt(String),
    #[error("weight file error: {0}")]
    WeightFile(String),
    #[error("detokenize: {0}")]
    Detokenize(String),
}
