//! Post-hoc calibration of raw model scores.
//!
//! [`fit_isotonic`] runs pool-adjacent-violators; [`PositionCalibrator`] fits
//! one independent head per display rank 1..=25 with a global fallback.

mod artifact;
mod isotonic;
mod position;

pub use artifact::{CalibrationArtifact, HeadRecord, INTERPOLATION};
pub use isotonic::{calibrate, fit_isotonic, observed_expected_ratio, CalibrationHead};
pub use position::{fit_bucketed, fit_position_conditional, PositionCalibrator, MAX_RANK};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("calibration head has not been fitted")]
    Unfitted,
    #[error("ratio undefined: {0}")]
    UndefinedRatio(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("artifact error: {0}")]
    Artifact(String),
}
