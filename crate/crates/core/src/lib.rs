//! Semantic-search serving stack at desk scale.
//!
//! * [`model`]: toy decoder-only transformer, tokenizer, prompts, prefill.
//! * [`scoring`]: naive, prefix-cached, multi-item and mixed-input scoring.
//! * [`retrieval`]: exhaustive filtered top-K with a linear ranking score.
//! * [`ranking`]: losses, label transforms and evaluation metrics.
//! * [`calibration`]: isotonic and position-conditioned calibration.
//! * [`midtier`]: score cache, depth controller, retries, traffic shaping
//!   and the load simulator.
//! * [`search`]: the end-to-end query path used by the HTTP service.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below pin the usual
//! precisions.

pub mod calibration;
pub mod data;
pub mod jsonl;
pub mod midtier;
pub mod model;
pub mod ranking;
pub mod retrieval;
pub mod scalar;
pub mod scoring;
pub mod search;

pub use scalar::Scalar;

/// Toy model weights in the serving precision.
pub type Weights = model::ModelWeights<f32>;
pub type KvCache = model::KvCache<f32>;
pub type Engine = scoring::ScoringEngine<f32>;
pub type Corpus = retrieval::Corpus<f32>;
pub type Document = retrieval::DocumentRecord<f32>;
pub type Query = retrieval::QuerySpec<f32>;
