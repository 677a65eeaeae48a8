//! The federated-evaluation coordinator and rho calibration.

use rand::Rng;
use serde::{Deserialize, Serialize};

use fedtask_core::task::{ActiveWindow, Precondition};
use fedtask_core::wire::to_canonical_json;
use fedtask_core::{AttachmentBlob, FleetHandle, TaskDescriptor};

use super::confidence::ConfidenceSource;
use super::wer::wer;
use super::{CalibrationFactor, FeError, Utterance};

/// Task payload published to devices for a federated evaluation run.
/// A null `confidence_model_blob_ref` selects the simulation-only perfect
/// oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeTaskPayload {
    pub confidence_model_blob_ref: Option<String>,
    pub rho: f64,
    pub data_key: String,
}

#[derive(Debug, Clone)]
pub struct FeRunConfig {
    pub task_id: String,
    pub data_key: String,
    pub source: ConfidenceSource,
    pub rho: CalibrationFactor,
    pub sampling_rate: f64,
    pub target_result_count: u64,
    pub window_hours: u64,
}

/// Count-weighted population estimate aggregated from per-device sums.
#[derive(Debug, Clone, Serialize)]
pub struct FePopulationStats {
    pub device_count: usize,
    pub utterance_count: u64,
    pub empty_hypothesis_count: u64,
    pub mean_ewer: f64,
    /// Count-weighted standard deviation of per-device mean eWER.
    pub spread: f64,
}

/// Estimates the global calibration factor as the mean over the labeled
/// set of (WER - raw eWER). Utterances with empty hypotheses or references
/// are excluded (the estimator is undefined for them).
pub fn calibrate_rho<R: Rng + ?Sized>(
    labeled_set: &[Utterance],
    source: &ConfidenceSource,
    rng: &mut R,
) -> Result<CalibrationFactor, FeError> {
    let mut residual_sum = 0.0;
    let mut used = 0usize;
    for utterance in labeled_set {
        if utterance.reference_words.is_empty() || utterance.hypothesis_words.is_empty() {
            continue;
        }
        let actual = wer(&utterance.hypothesis_words, &utterance.reference_words)?;
        let raw = super::ewer(utterance, source, CalibrationFactor { rho: 0.0 }, rng)?;
        residual_sum += actual - raw;
        used += 1;
    }
    if used == 0 {
        return Err(FeError::EmptyCalibrationSet);
    }
    Ok(CalibrationFactor { rho: residual_sum / used as f64 })
}

/// Per-device result payload fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeDeviceResult {
    pub utterance_count: u64,
    pub ewer_sum: f64,
    pub empty_hypothesis_count: u64,
}

/// Runs one federated evaluation task and aggregates the population eWER.
///
/// Devices report only (utterance count, eWER sum); contributions are
/// summed in canonical sorted order so the aggregate is independent of
/// arrival order, bit for bit.
pub fn run_fe(fleet: &mut dyn FleetHandle, cfg: &FeRunConfig) -> Result<FePopulationStats, FeError> {
    let mut attachments = Vec::new();
    let model_ref = match &cfg.source {
        ConfidenceSource::Model(model) => {
            let blob = AttachmentBlob::new(to_canonical_json(model).expect("model serializes"));
            let hash = blob.content_hash.clone();
            attachments.push(blob);
            Some(hash)
        }
        ConfidenceSource::Perfect => None,
    };
    let payload = FeTaskPayload {
        confidence_model_blob_ref: model_ref,
        rho: cfg.rho.rho,
        data_key: cfg.data_key.clone(),
    };
    let payload_blob = AttachmentBlob::new(to_canonical_json(&payload).expect("payload serializes"));
    let mut refs = vec![payload_blob.content_hash.clone()];
    refs.extend(attachments.iter().map(|a| a.content_hash.clone()));
    let mut all_attachments = vec![payload_blob];
    all_attachments.extend(attachments);

    let now = fleet.now();
    let descriptor = TaskDescriptor {
        task_id: cfg.task_id.clone(),
        plugin_id: super::ASR_PLUGIN_ID.into(),
        sampling_rate: cfg.sampling_rate,
        preconditions: vec![Precondition::data_key_present(cfg.data_key.clone())],
        attachment_refs: refs,
        target_result_count: cfg.target_result_count,
        active_window: ActiveWindow::new(now, now.plus_hours(cfg.window_hours)),
        payload_schema_version: 1,
    };
    let report = fleet.run_task(descriptor, all_attachments)?;

    let mut device_results: Vec<FeDeviceResult> = report
        .envelopes
        .iter()
        .filter_map(|envelope| {
            serde_json::from_value(serde_json::Value::Object(envelope.payload.clone())).ok()
        })
        .collect();
    if device_results.is_empty() {
        return Err(FeError::NoResults { task_id: cfg.task_id.clone() });
    }
    aggregate_device_results(&mut device_results)
}

/// Canonical-order aggregation, shared with tests and the simulator's
/// hidden-WER oracle path.
pub fn aggregate_device_results(results: &mut [FeDeviceResult]) -> Result<FePopulationStats, FeError> {
    results.sort_by(|a, b| {
        a.utterance_count
            .cmp(&b.utterance_count)
            .then(a.ewer_sum.total_cmp(&b.ewer_sum))
            .then(a.empty_hypothesis_count.cmp(&b.empty_hypothesis_count))
    });
    let mut total_count = 0u64;
    let mut total_sum = 0.0;
    let mut total_empty = 0u64;
    for result in results.iter() {
        total_count += result.utterance_count;
        total_sum += result.ewer_sum;
        total_empty += result.empty_hypothesis_count;
    }
    if total_count == 0 {
        return Err(FeError::NoUtterances);
    }
    let mean = total_sum / total_count as f64;
    let mut weighted_var = 0.0;
    for result in results.iter() {
        if result.utterance_count > 0 {
            let device_mean = result.ewer_sum / result.utterance_count as f64;
            weighted_var += result.utterance_count as f64 * (device_mean - mean).powi(2);
        }
    }
    let spread = (weighted_var / total_count as f64).sqrt();
    Ok(FePopulationStats {
        device_count: results.len(),
        utterance_count: total_count,
        empty_hypothesis_count: total_empty,
        mean_ewer: mean,
        spread,
    })
}
