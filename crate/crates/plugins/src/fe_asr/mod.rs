//! Federated evaluation of ASR accuracy.
//!
//! Reference transcriptions are not available on devices, so accuracy is
//! estimated from per-word confidences: eWER = 100 * (1 - mean confidence)
//! + rho, where the global calibration factor rho compensates for word
//! deletions the confidence model cannot see. Devices report only
//! (utterance count, eWER sum); hidden references exist solely inside the
//! simulator for oracle comparisons.

mod confidence;
mod coordinator;
mod plugin;
mod wer;

pub use confidence::{
    train_confidence_model, word_confidence, ConfidenceModel, ConfidenceSource,
};
pub use coordinator::{
    aggregate_device_results, calibrate_rho, run_fe, FeDeviceResult, FePopulationStats,
    FeRunConfig, FeTaskPayload,
};
pub use plugin::{AsrEvalPlugin, ASR_PLUGIN_ID};
pub use wer::{correctness_labels, edit_distance, wer};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeError {
    #[error("reference transcription is empty")]
    EmptyReference,
    #[error("hypothesis is empty; eWER is undefined")]
    EmptyHypothesis,
    #[error("feature dimension mismatch: model has {model}, features have {features}")]
    DimensionMismatch { model: usize, features: usize },
    #[error("calibration set is empty")]
    EmptyCalibrationSet,
    #[error("utterance invariant violated: {0}")]
    InvalidUtterance(String),
    #[error("no participating devices reported results for task {task_id}")]
    NoResults { task_id: String },
    #[error("participating devices reported zero utterances")]
    NoUtterances,
    #[error(transparent)]
    Fleet(#[from] fedtask_core::FleetError),
}

/// One recognized utterance. `reference_words` is simulation-only ground
/// truth and never leaves the device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub reference_words: Vec<String>,
    pub hypothesis_words: Vec<String>,
    /// Decode-time features per hypothesized word (acoustic-score proxy,
    /// duration proxy, ...).
    pub word_features: Vec<Vec<f64>>,
}

impl Utterance {
    pub fn validate(&self) -> Result<(), FeError> {
        if self.hypothesis_words.len() != self.word_features.len() {
            return Err(FeError::InvalidUtterance(format!(
                "{} hypothesis words but {} feature vectors",
                self.hypothesis_words.len(),
                self.word_features.len()
            )));
        }
        Ok(())
    }
}

/// Additive correction matching mean eWER to mean WER on a labeled set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFactor {
    pub rho: f64,
}

/// Estimated word error rate for one utterance:
/// `100 * (1 - mean word confidence) + rho`.
///
/// Computed as `100 * ((n - sum_c) / n) + rho`, an association that keeps
/// integer confidence sums exact so that with a perfect confidence oracle
/// and substitution-only errors, eWER equals WER bit for bit.
pub fn ewer<R: rand::Rng + ?Sized>(
    utterance: &Utterance,
    source: &ConfidenceSource,
    rho: CalibrationFactor,
    rng: &mut R,
) -> Result<f64, FeError> {
    utterance.validate()?;
    let n = utterance.hypothesis_words.len();
    if n == 0 {
        return Err(FeError::EmptyHypothesis);
    }
    let confidences = source.confidences(utterance, rng)?;
    let sum: f64 = confidences.iter().sum();
    let n = n as f64;
    Ok(100.0 * ((n - sum) / n) + rho.rho)
}
