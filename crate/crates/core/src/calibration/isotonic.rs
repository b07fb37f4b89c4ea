use super::CalibrationError;
use crate::Scalar;

/// Monotone step function with linear ramps across the gaps between blocks.
///
/// Block `i` covers raw scores `[lower[i], upper[i]]` and maps them to
/// `values[i]`, the mean outcome of its `counts[i]` training rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrationHead<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub values: Vec<T>,
    pub counts: Vec<usize>,
}

impl<T: Scalar> CalibrationHead<T> {
    pub fn is_fitted(&self) -> bool {
        !self.values.is_empty()
    }

    pub fn n_blocks(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let n = self.values.len();
        if self.lower.len() != n || self.upper.len() != n || self.counts.len() != n {
            return Err(CalibrationError::Artifact("head arrays differ in length".into()));
        }
        for i in 0..n {
            if !(self.lower[i] <= self.upper[i]) || !(self.values[i] >= T::zero() && self.values[i] <= T::one()) {
                return Err(CalibrationError::Artifact(format!("block {i} is malformed")));
            }
            if i > 0 && (!(self.upper[i - 1] < self.lower[i]) || self.values[i - 1] > self.values[i]) {
                return Err(CalibrationError::Artifact(format!("blocks {} and {i} are out of order", i - 1)));
            }
        }
        Ok(())
    }
}

struct Block<T> {
    sum: T,
    count: usize,
    lower: T,
    upper: T,
}

/// Pool-adjacent-violators fit of `(raw score, outcome)` pairs, minimizing
/// squared error under a non-decreasing constraint. Equal raw scores always
/// share a block.
pub fn fit_isotonic<T: Scalar>(pairs: &[(T, T)]) -> Result<CalibrationHead<T>, CalibrationError> {
    if pairs.is_empty() {
        return Err(CalibrationError::Input("need at least one pair".into()));
    }
    if pairs.iter().any(|(s, y)| !s.is_finite() || !y.is_finite()) {
        return Err(CalibrationError::Input("scores and outcomes must be finite".into()));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));

    let mut stack: Vec<Block<T>> = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].0;
        let mut block = Block { sum: T::zero(), count: 0, lower: score, upper: score };
        while i < sorted.len() && sorted[i].0 == score {
            block.sum = block.sum + sorted[i].1;
            block.count += 1;
            i += 1;
        }
        // Merge while the previous block's mean exceeds this one's.
        while let Some(prev) = stack.last() {
            if prev.sum * T::from_count(block.count) > block.sum * T::from_count(prev.count) {
                let prev = stack.pop().expect("non-empty");
                block = Block {
                    sum: prev.sum + block.sum,
                    count: prev.count + block.count,
                    lower: prev.lower,
                    upper: block.upper,
                };
            } else {
                break;
            }
        }
        stack.push(block);
    }

    let mut head = CalibrationHead::default();
    for b in stack {
        head.lower.push(b.lower);
        head.upper.push(b.upper);
        head.values.push((b.sum / T::from_count(b.count)).max(T::zero()).min(T::one()));
        head.counts.push(b.count);
    }
    Ok(head)
}

/// Calibrated probability for a raw score: the block value inside a block,
/// linear interpolation across gaps, flat beyond the ends.
pub fn calibrate<T: Scalar>(head: &CalibrationHead<T>, score: T) -> Result<T, CalibrationError> {
    if !head.is_fitted() {
        return Err(CalibrationError::Unfitted);
    }
    let n = head.n_blocks();
    let v = if score <= head.upper[0] {
        head.values[0]
    } else if score >= head.lower[n - 1] {
        head.values[n - 1]
    } else {
        // First block whose upper edge reaches the score.
        let i = head.upper.partition_point(|&u| u < score);
        if score >= head.lower[i] {
            head.values[i]
        } else {
            let (a, b) = (head.upper[i - 1], head.lower[i]);
            let t = (score - a) / (b - a);
            head.values[i - 1] + t * (head.values[i] - head.values[i - 1])
        }
    };
    Ok(v.max(T::zero()).min(T::one()))
}

/// Σ outcomes / Σ predictions.
pub fn observed_expected_ratio<T: Scalar>(predictions: &[T], outcomes: &[T]) -> Result<T, CalibrationError> {
    if predictions.len() != outcomes.len() {
        return Err(CalibrationError::Input("predictions and outcomes differ in length".into()));
    }
    let expected: T = predictions.iter().copied().sum();
    if !(expected > T::zero()) {
        return Err(CalibrationError::UndefinedRatio("sum of predictions is zero".into()));
    }
    Ok(outcomes.iter().copied().sum::<T>() / expected)
}
