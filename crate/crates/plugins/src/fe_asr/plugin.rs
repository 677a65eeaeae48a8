//! The on-device federated-evaluation plug-in.

use fedtask_core::envelope::Payload;
use fedtask_device::{ExecutionContext, PluginError, StoreView, TaskMaterials, TaskPlugin};

use super::coordinator::{FeDeviceResult, FeTaskPayload};
use super::{ewer, CalibrationFactor, ConfidenceModel, ConfidenceSource, FeError, Utterance};

pub const ASR_PLUGIN_ID: &str = "asr_eval";

const MILLIS_PER_UTTERANCE: u64 = 2;

/// Computes per-utterance eWER over locally stored recognition records and
/// reports only the aggregate (count, eWER sum). Utterances with empty
/// hypotheses are excluded from the sums and counted separately.
#[derive(Debug, Clone, Default)]
pub struct AsrEvalPlugin;

impl TaskPlugin for AsrEvalPlugin {
    fn plugin_id(&self) -> &str {
        ASR_PLUGIN_ID
    }

    fn execute(
        &self,
        materials: &TaskMaterials,
        store: &StoreView<'_>,
        ctx: &mut ExecutionContext<'_>,
    ) -> Result<Payload, PluginError> {
        let payload: FeTaskPayload = serde_json::from_value(materials.payload_json()?)
            .map_err(|e| PluginError::failed(format!("malformed evaluation payload: {e}")))?;

        let source = match &payload.confidence_model_blob_ref {
            Some(reference) => {
                let blob = materials.blob(reference).ok_or_else(|| {
                    PluginError::failed(format!("confidence model blob {reference} missing"))
                })?;
                let model: ConfidenceModel = serde_json::from_slice(&blob.bytes)
                    .map_err(|e| PluginError::failed(format!("malformed confidence model: {e}")))?;
                ConfidenceSource::Model(model)
            }
            None => ConfidenceSource::Perfect,
        };
        let rho = CalibrationFactor { rho: payload.rho };

        let records: Vec<&fedtask_core::DataRecord> =
            store.records_for_key(&payload.data_key).collect();
        if records.is_empty() {
            return Err(PluginError::EmptyDataset);
        }

        let mut result =
            FeDeviceResult { utterance_count: 0, ewer_sum: 0.0, empty_hypothesis_count: 0 };
        let total = records.len();
        for (i, record) in records.into_iter().enumerate() {
            ctx.checkpoint((i + 1) as f64 / total as f64, MILLIS_PER_UTTERANCE)?;
            let Ok(utterance) =
                serde_json::from_value::<Utterance>(serde_json::Value::Object(record.payload.clone()))
            else {
                continue;
            };
            match ewer(&utterance, &source, rho, ctx.rng()) {
                Ok(value) => {
                    result.utterance_count += 1;
                    result.ewer_sum += value;
                }
                Err(FeError::EmptyHypothesis) => result.empty_hypothesis_count += 1,
                Err(error) => return Err(PluginError::failed(error.to_string())),
            }
        }

        let value = serde_json::to_value(&result).map_err(|e| PluginError::failed(e.to_string()))?;
        match value {
            serde_json::Value::Object(map) => Ok(map),
            _ => Err(PluginError::failed("unexpected result shape")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fedtask_core::envelope::Payload as RecordPayload;
    use fedtask_core::task::ActiveWindow;
    use fedtask_core::wire::to_canonical_json;
    use fedtask_core::{AttachmentBlob, DataRecord, TaskDescriptor, VirtualTime};
    use fedtask_device::executor::AlwaysAvailable;
    use fedtask_device::{execute_task, DataStore, TaskStatus};
    use rand::SeedableRng;

    fn utterance_record(hyp: &str, reference: &str) -> DataRecord {
        let hyp_words: Vec<String> = hyp.split_whitespace().map(str::to_string).collect();
        let mut payload = RecordPayload::new();
        payload.insert(
            "reference_words".into(),
            serde_json::json!(reference.split_whitespace().collect::<Vec<_>>()),
        );
        payload.insert("word_features".into(), serde_json::json!(vec![vec![0.0f64]; hyp_words.len()]));
        payload.insert("hypothesis_words".into(), serde_json::json!(hyp_words));
        DataRecord::new("dictation_audio", payload, VirtualTime::ZERO)
    }

    fn materials() -> TaskMaterials {
        let payload = FeTaskPayload {
            confidence_model_blob_ref: None,
            rho: 0.0,
            data_key: "dictation_audio".into(),
        };
        let blob = AttachmentBlob::new(to_canonical_json(&payload).unwrap());
        let descriptor = TaskDescriptor {
            task_id: "fe-test".into(),
            plugin_id: ASR_PLUGIN_ID.into(),
            sampling_rate: 1.0,
            preconditions: vec![],
            attachment_refs: vec![blob.content_hash.clone()],
            target_result_count: 1,
            active_window: ActiveWindow::new(VirtualTime::ZERO, VirtualTime::from_days(1)),
            payload_schema_version: 1,
        };
        TaskMaterials::new(descriptor, vec![blob])
    }

    #[test]
    fn reports_only_counts_and_sums() {
        let mut store = DataStore::new(true);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0);
        store.write(utterance_record("a b c", "a x c"), &mut rng);
        store.write(utterance_record("a b", "a b"), &mut rng);
        store.write(utterance_record("", "ghost words"), &mut rng);

        let outcome = execute_task(
            &AsrEvalPlugin,
            &materials(),
            &store.view().unwrap(),
            &AlwaysAvailable,
            60_000,
            [2; 32],
        );
        assert_eq!(outcome.status, TaskStatus::Completed);
        let payload = outcome.result_payload.unwrap();

        // Privacy: only the aggregate fields, never words or features.
        let keys: Vec<&String> = payload.keys().collect();
        assert_eq!(keys, vec!["empty_hypothesis_count", "ewer_sum", "utterance_count"]);

        assert_eq!(payload["utterance_count"], serde_json::json!(2));
        assert_eq!(payload["empty_hypothesis_count"], serde_json::json!(1));
        // Perfect oracle: utterance one has 1 wrong word of 3, two is exact.
        let expected = 100.0 * (1.0f64 / 3.0);
        let sum = payload["ewer_sum"].as_f64().unwrap();
        assert!((sum - expected).abs() < 1e-12);
    }

    #[test]
    fn no_matching_records_is_empty_dataset() {
        let store = DataStore::new(true);
        let outcome = execute_task(
            &AsrEvalPlugin,
            &materials(),
            &store.view().unwrap(),
            &AlwaysAvailable,
            60_000,
            [2; 32],
        );
        assert_eq!(outcome.status, TaskStatus::Failed);
    }
}
