use serde::{Deserialize, Serialize};

use super::isotonic::CalibrationHead;
use super::position::{PositionCalibrator, MAX_RANK};
use super::CalibrationError;
use crate::Scalar;

/// How values between blocks are produced; recorded with every head.
pub const INTERPOLATION: &str = "linear_between_block_edges";

/// Serialized calibration head. `breakpoints` are the lower block edges and
/// `upper` the matching upper edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadRecord {
    pub head_id: String,
    pub breakpoints: Vec<f64>,
    pub upper: Vec<f64>,
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
    /// `None` for the global head.
    pub rank: Option<usize>,
    pub bucket: Option<String>,
    pub interpolation: String,
}

impl HeadRecord {
    pub fn from_head<T: Scalar>(
        head_id: &str,
        head: &CalibrationHead<T>,
        rank: Option<usize>,
        bucket: Option<String>,
    ) -> Self {
        Self {
            head_id: head_id.to_string(),
            breakpoints: head.lower.iter().map(|v| v.as_f64()).collect(),
            upper: head.upper.iter().map(|v| v.as_f64()).collect(),
            values: head.values.iter().map(|v| v.as_f64()).collect(),
            counts: head.counts.clone(),
            rank,
            bucket,
            interpolation: INTERPOLATION.to_string(),
        }
    }

    pub fn to_head<T: Scalar>(&self) -> Result<CalibrationHead<T>, CalibrationError> {
        let head = CalibrationHead {
            lower: self.breakpoints.iter().map(|&v| T::lit(v)).collect(),
            upper: self.upper.iter().map(|&v| T::lit(v)).collect(),
            values: self.values.iter().map(|&v| T::lit(v)).collect(),
            counts: self.counts.clone(),
        };
        head.validate()?;
        Ok(head)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CalibrationArtifact {
    pub heads: Vec<HeadRecord>,
}

impl CalibrationArtifact {
    pub fn from_position<T: Scalar>(task: &str, cal: &PositionCalibrator<T>) -> Self {
        let mut heads = vec![HeadRecord::from_head(&format!("{task}/global"), &cal.global, None, None)];
        for (i, h) in cal.by_rank.iter().enumerate() {
            if let Some(h) = h {
                heads.push(HeadRecord::from_head(&format!("{task}/rank{}", i + 1), h, Some(i + 1), None));
            }
        }
        Self { heads }
    }

    /// Rebuilds the position calibrator for `task` (heads prefixed `task/`).
    pub fn position<T: Scalar>(&self, task: &str) -> Result<PositionCalibrator<T>, CalibrationError> {
        let prefix = format!("{task}/");
        let mut global = None;
        let mut by_rank = vec![None; MAX_RANK];
        for rec in self.heads.iter().filter(|h| h.head_id.starts_with(&prefix) && h.bucket.is_none()) {
            match rec.rank {
                None => global = Some(rec.to_head()?),
                Some(r) if (1..=MAX_RANK).contains(&r) => by_rank[r - 1] = Some(rec.to_head()?),
                Some(r) => return Err(CalibrationError::Artifact(format!("rank {r} out of range"))),
            }
        }
        let global = global.ok_or_else(|| CalibrationError::Artifact(format!("no global head for task '{task}'")))?;
        Ok(PositionCalibrator { global, by_rank })
    }

    pub fn tasks(&self) -> Vec<String> {
        let mut t: Vec<String> =
            self.heads.iter().filter_map(|h| h.head_id.split_once('/').map(|(a, _)| a.to_string())).collect();
        t.dedup();
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::fit_position_conditional;

    #[test]
    fn artifact_round_trip() {
        let rows: Vec<(usize, f64, f64)> =
            (0..200).map(|i| (1 + i % 3, (i % 17) as f64 / 17.0, ((i * 7) % 3 == 0) as u8 as f64)).collect();
        let cal = fit_position_conditional(&rows).unwrap();
        let art = CalibrationArtifact::from_position("relevance", &cal);
        let json = serde_json::to_string(&art).unwrap();
        let back: CalibrationArtifact = serde_json::from_str(&json).unwrap();
        assert_eq!(back.position::<f64>("relevance").unwrap(), cal);
        assert_eq!(back.tasks(), vec!["relevance".to_string()]);
        assert!(back.position::<f64>("click").is_err());
    }
}
