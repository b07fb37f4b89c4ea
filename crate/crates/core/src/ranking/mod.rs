//! Training objectives, label transforms and ranking metrics.
//!
//! Every trainable loss returns its analytic gradient alongside the value.
//! Log-based losses clamp probabilities to `[PROB_EPS, 1 - PROB_EPS]`.

mod labels;
mod losses;
mod masking;
mod metrics;

pub use labels::{
    build_ranking_pairs, soft_label_map, summarization_reward, RewardParams, SoftLabelMap, SoftLabelMode,
};
pub use losses::{
    combined_retrieval_loss, infonce_loss, kl_distillation_loss, multitask_bce, pairwise_margin_loss, KlDirection,
    KlLoss, LossGrad, MultitaskBce, TaskBatch, TeacherSignal, TeacherTask,
};
pub use masking::{
    apply_loss_mask, fit_action_head, predict_action, ActionCell, ActionRow, MaskedActionBatch, MaskedRow,
};
pub use metrics::{auroc, ndcg_at_k, precision_recall_at_k, MetricRecord, NDCG_GAIN_CONVENTION};

pub(crate) use losses::bce_with_logit;

use thiserror::Error;

/// Probability clamp used by every log-based loss.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankingError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("input error: {0}")]
    Input(String),
}
