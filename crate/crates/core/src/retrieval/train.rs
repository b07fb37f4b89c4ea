use serde::{Deserialize, Serialize};

use super::scan::cosine;
use super::{DocumentRecord, LabeledPair, QuerySpec, RarWeights, RetrievalError};
use crate::ranking::bce_with_logit;
use crate::scalar::logistic;
use crate::Scalar;

/// One training row: the cosine term, features in weight order, and labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RarExample<T> {
    pub cosine: T,
    pub features: Vec<T>,
    pub relevance: bool,
    pub engagement: bool,
}

impl<T: Scalar> RarExample<T> {
    pub fn from_pair(
        q: &QuerySpec<T>,
        d: &DocumentRecord<T>,
        w: &RarWeights<T>,
        pair: &LabeledPair,
    ) -> Result<Self, RetrievalError> {
        Ok(Self {
            cosine: cosine(&q.embedding, &d.embedding)?,
            features: w.feature_vector(d)?,
            relevance: pair.relevance,
            engagement: pair.engagement,
        })
    }

    /// Linear score `S` under the parameter vector `[w_0, w_1..]`.
    pub fn score(&self, params: &[T]) -> T {
        self.features.iter().zip(&params[1..]).fold(params[0] * self.cosine, |s, (&f, &w)| s + w * f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RarObjective<T> {
    pub loss: T,
    /// Gradient in parameter order `[w_0, w_1..]`.
    pub grad: Vec<T>,
    /// Derivative with respect to the training intercept.
    pub grad_intercept: T,
}

fn indicator<T: Scalar>(b: bool) -> T {
    if b {
        T::one()
    } else {
        T::zero()
    }
}

/// Mean of `λ·BCE(σ(S), L_R) + (1 − λ)·BCE(σ(S), L_E)` and its gradient.
pub fn rar_objective<T: Scalar>(w: &RarWeights<T>, data: &[RarExample<T>]) -> Result<RarObjective<T>, RetrievalError> {
    rar_objective_shifted(w, T::zero(), data)
}

/// The objective with `S + b` in place of `S`. The shift absorbs the label
/// base rate during training and never changes a ranking.
pub fn rar_objective_shifted<T: Scalar>(
    w: &RarWeights<T>,
    intercept: T,
    data: &[RarExample<T>],
) -> Result<RarObjective<T>, RetrievalError> {
    let lambda = w.lambda;
    if !(lambda >= T::zero() && lambda <= T::one()) {
        return Err(RetrievalError::Input(format!("lambda {lambda} outside [0, 1]")));
    }
    if data.is_empty() {
        return Err(RetrievalError::Input("no training examples".into()));
    }
    let params = w.params();
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); params.len()];
    let mut grad_intercept = T::zero();
    for ex in data {
        if ex.features.len() + 1 != params.len() {
            return Err(RetrievalError::Alignment(format!(
                "example has {} features, weights have {}",
                ex.features.len(),
                params.len() - 1
            )));
        }
        let s = ex.score(&params) + intercept;
        let (yr, ye) = (indicator::<T>(ex.relevance), indicator::<T>(ex.engagement));
        loss = loss + lambda * bce_with_logit(s, yr) + (T::one() - lambda) * bce_with_logit(s, ye);
        let ds = logistic(s) - (lambda * yr + (T::one() - lambda) * ye);
        grad_intercept = grad_intercept + ds;
        grad[0] = grad[0] + ds * ex.cosine;
        for (g, &f) in grad[1..].iter_mut().zip(&ex.features) {
            *g = *g + ds * f;
        }
    }
    let n = T::from_count(data.len());
    Ok(RarObjective {
        loss: loss / n,
        grad: grad.into_iter().map(|g| g / n).collect(),
        grad_intercept: grad_intercept / n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RarTrainReport<T> {
    /// Lowest-loss weights seen, so the final loss never exceeds the initial one.
    pub weights: RarWeights<T>,
    /// Training intercept paired with `weights`; not part of the retrieval score.
    pub intercept: T,
    /// Loss before training and after each epoch.
    pub loss_history: Vec<T>,
}

impl<T: Scalar> RarTrainReport<T> {
    pub fn initial_loss(&self) -> T {
        self.loss_history[0]
    }

    pub fn best_loss(&self) -> T {
        self.loss_history.iter().copied().fold(T::infinity(), T::min)
    }
}

/// Full-batch gradient descent on the mixed relevance/engagement objective.
/// An intercept is fitted alongside the weights and starts at zero, so the
/// first loss is the plain objective at `init`.
pub fn train_rar<T: Scalar>(
    init: &RarWeights<T>,
    data: &[RarExample<T>],
    lambda: T,
    learning_rate: T,
    epochs: usize,
) -> Result<RarTrainReport<T>, RetrievalError> {
    if !(learning_rate > T::zero()) || !learning_rate.is_finite() {
        return Err(RetrievalError::Input(format!("learning rate {learning_rate} must be positive")));
    }
    let mut w = RarWeights { lambda, ..init.clone() };
    let mut b = T::zero();
    let mut obj = rar_objective_shifted(&w, b, data)?;
    let mut best = (obj.loss, w.clone(), b);
    let mut loss_history = vec![obj.loss];
    for epoch in 1..=epochs {
        let params: Vec<T> = w.params().iter().zip(&obj.grad).map(|(&p, &g)| p - learning_rate * g).collect();
        w = w.with_params(&params)?;
        b = b - learning_rate * obj.grad_intercept;
        obj = rar_objective_shifted(&w, b, data)?;
        if !obj.loss.is_finite() || !w.is_finite() || !b.is_finite() {
            return Err(RetrievalError::Divergence { epoch, loss: obj.loss.as_f64() });
        }
        loss_history.push(obj.loss);
        if obj.loss < best.0 {
            best = (obj.loss, w.clone(), b);
        }
    }
    Ok(RarTrainReport { weights: best.1, intercept: best.2, loss_history })
}
