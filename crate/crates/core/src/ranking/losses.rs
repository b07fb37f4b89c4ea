use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{RankingError, PROB_EPS};
use crate::scalar::{clamp_prob, log_sum_exp};
use crate::Scalar;

/// Loss value with gradients with respect to the positive and negative scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T> {
    pub loss: T,
    pub grad_pos: T,
    pub grad_neg: Vec<T>,
}

/// `-log(e^{s⁺/τ} / (e^{s⁺/τ} + Σ e^{s⁻/τ}))`, evaluated through log-sum-exp.
pub fn infonce_loss<T: Scalar>(sim_pos: T, sims_neg: &[T], tau: T) -> Result<LossGrad<T>, RankingError> {
    if !(tau > T::zero()) {
        return Err(RankingError::Parameter(format!("temperature must be > 0, got {tau}")));
    }
    let mut logits = Vec::with_capacity(sims_neg.len() + 1);
    logits.push(sim_pos / tau);
    logits.extend(sims_neg.iter().map(|&s| s / tau));
    let lse = log_sum_exp(&logits);
    let loss = lse - logits[0];
    let probs: Vec<T> = logits.iter().map(|&z| (z - lse).exp()).collect();
    Ok(LossGrad {
        loss,
        grad_pos: (probs[0] - T::one()) / tau,
        grad_neg: probs[1..].iter().map(|&p| p / tau).collect(),
    })
}

/// `Σ max(0, m - s⁺ + s⁻)`. The subgradient at the kink is 0.
pub fn pairwise_margin_loss<T: Scalar>(sim_pos: T, sims_neg: &[T], margin: T) -> Result<LossGrad<T>, RankingError> {
    if !(margin > T::zero()) {
        return Err(RankingError::Parameter(format!("margin must be > 0, got {margin}")));
    }
    let mut loss = T::zero();
    let mut grad_pos = T::zero();
    let mut grad_neg = Vec::with_capacity(sims_neg.len());
    for &s in sims_neg {
        let slack = margin - sim_pos + s;
        if slack > T::zero() {
            loss = loss + slack;
            grad_pos = grad_pos - T::one();
            grad_neg.push(T::one());
        } else {
            grad_neg.push(T::zero());
        }
    }
    Ok(LossGrad { loss, grad_pos, grad_neg })
}

/// `λ·infonce + (1-λ)·pair`.
pub fn combined_retrieval_loss<T: Scalar>(infonce: T, pair: T, lambda: T) -> Result<T, RankingError> {
    if !(lambda >= T::zero() && lambda <= T::one()) {
        return Err(RankingError::Parameter(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    Ok(lambda * infonce + (T::one() - lambda) * pair)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `KL(teacher ‖ student)`
    #[default]
    Forward,
    /// `KL(student ‖ teacher)`
    Reverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherTask<T> {
    pub task: String,
    /// Teacher probability of the positive class.
    pub prob: T,
    pub weight: T,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TeacherSignal<T> {
    pub tasks: Vec<TeacherTask<T>>,
}

impl<T: Scalar> TeacherSignal<T> {
    /// Uniform unit weights over `(task, teacher probability)` pairs.
    pub fn uniform(probs: &[(&str, T)]) -> Self {
        Self {
            tasks: probs.iter().map(|&(t, p)| TeacherTask { task: t.to_string(), prob: p, weight: T::one() }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlLoss<T> {
    pub loss: T,
    pub per_task: BTreeMap<String, T>,
    /// Gradient with respect to each student logit.
    pub grad_logits: BTreeMap<String, T>,
}

fn bernoulli_kl<T: Scalar>(p: T, q: T) -> T {
    let one = T::one();
    p * (p / q).ln() + (one - p) * ((one - p) / (one - q)).ln()
}

/// Weighted per-task Bernoulli KL between teacher and student.
pub fn kl_distillation_loss<T: Scalar>(
    teachers: &TeacherSignal<T>,
    student: &BTreeMap<String, T>,
    direction: KlDirection,
) -> Result<KlLoss<T>, RankingError> {
    let eps = T::lit(PROB_EPS);
    let mut out = KlLoss { loss: T::zero(), per_task: BTreeMap::new(), grad_logits: BTreeMap::new() };
    for t in &teachers.tasks {
        if !(t.weight >= T::zero()) || !t.weight.is_finite() {
            return Err(RankingError::Parameter(format!("task '{}' has invalid weight {}", t.task, t.weight)));
        }
        let q = *student
            .get(&t.task)
            .ok_or_else(|| RankingError::Input(format!("student has no output for task '{}'", t.task)))?;
        let p = clamp_prob(t.prob, eps);
        let q = clamp_prob(q, eps);
        let (kl, grad) = match direction {
            // d/dz KL(p‖σ(z)) = σ(z) - p
            KlDirection::Forward => (bernoulli_kl(p, q), q - p),
            // d/dz KL(σ(z)‖p) = q(1-q)·(logit q - logit p)
            KlDirection::Reverse => {
                let logit = |x: T| (x / (T::one() - x)).ln();
                (bernoulli_kl(q, p), q * (T::one() - q) * (logit(q) - logit(p)))
            }
        };
        let contribution = t.weight * kl;
        out.loss = out.loss + contribution;
        out.per_task.insert(t.task.clone(), contribution);
        out.grad_logits.insert(t.task.clone(), t.weight * grad);
    }
    Ok(out)
}

/// One task's predictions and labels; rows with `include == false` are masked out.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskBatch<T> {
    pub task: String,
    pub weight: T,
    pub preds: Vec<T>,
    pub labels: Vec<T>,
    pub include: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultitaskBce<T> {
    pub loss: T,
    /// Per task, the gradient with respect to each prediction (0 for masked rows).
    pub grads: Vec<Vec<T>>,
    /// Weighted tasks whose rows were all masked; they contribute nothing.
    pub degenerate_tasks: Vec<String>,
}

/// `Σ_t w_t · mean BCE over the unmasked rows of task t`.
pub fn multitask_bce<T: Scalar>(tasks: &[TaskBatch<T>]) -> Result<MultitaskBce<T>, RankingError> {
    let eps = T::lit(PROB_EPS);
    let one = T::one();
    let mut out =
        MultitaskBce { loss: T::zero(), grads: Vec::with_capacity(tasks.len()), degenerate_tasks: Vec::new() };
    for t in tasks {
        let n = t.preds.len();
        if t.labels.len() != n || t.include.len() != n {
            return Err(RankingError::Input(format!("task '{}' has mismatched row counts", t.task)));
        }
        if !(t.weight >= T::zero()) {
            return Err(RankingError::Parameter(format!("task '{}' has negative weight", t.task)));
        }
        let active = t.include.iter().filter(|&&b| b).count();
        let mut grads = vec![T::zero(); n];
        if active == 0 {
            if t.weight > T::zero() {
                out.degenerate_tasks.push(t.task.clone());
            }
            out.grads.push(grads);
            continue;
        }
        let scale = t.weight / T::from_count(active);
        let mut sum = T::zero();
        for i in (0..n).filter(|&i| t.include[i]) {
            let p = clamp_prob(t.preds[i], eps);
            let y = t.labels[i];
            sum = sum - (y * p.ln() + (one - y) * (one - p).ln());
            grads[i] = -scale * (y / p - (one - y) / (one - p));
        }
        out.loss = out.loss + scale * sum;
        out.grads.push(grads);
    }
    Ok(out)
}

/// Mean BCE of `logistic(z)` against `y`, written through softplus for stability.
pub(crate) fn bce_with_logit<T: Scalar>(z: T, y: T) -> T {
    crate::scalar::softplus(z) - y * z
}
