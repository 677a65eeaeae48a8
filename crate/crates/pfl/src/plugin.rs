//! The on-device federated-learning plug-in.

use serde::{Deserialize, Serialize};

use fedtask_core::envelope::Payload;
use fedtask_device::{ExecutionContext, PluginError, StoreView, TaskMaterials, TaskPlugin};

use crate::model::{LocalDataset, ModelParameters};
use crate::privacy::{privatize_local, PrivacyConfig};
use crate::seal::{seal, RoundPublicKey};
use crate::train::{local_train, Objective, TrainSpec};
use crate::PflError;

pub const FL_PLUGIN_ID: &str = "fl_training";

const MILLIS_PER_EPOCH: u64 = 20;

/// Task payload published to devices for one FL round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlTaskPayload {
    pub model_blob_ref: String,
    pub objective: Objective,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: Option<usize>,
    pub clip_bound: f64,
    pub sigma_local: f64,
    pub round_public_key: RoundPublicKey,
    pub data_key: String,
}

/// Trains the published model on local data, privatizes the update and
/// seals it with the round public key. The plaintext delta never appears
/// in the result payload.
#[derive(Debug, Clone, Default)]
pub struct FlTrainingPlugin;

impl FlTrainingPlugin {
    fn dataset(store: &StoreView<'_>, data_key: &str) -> LocalDataset {
        let mut dataset = LocalDataset::default();
        for record in store.records_for_key(data_key) {
            let Some(x) = record.payload.get("x").and_then(|v| v.as_array()) else {
                continue;
            };
            let Some(y) = record.payload.get("y").and_then(|v| v.as_f64()) else {
                continue;
            };
            dataset.features.push(x.iter().filter_map(|v| v.as_f64()).collect());
            dataset.targets.push(y);
        }
        dataset
    }
}

impl TaskPlugin for FlTrainingPlugin {
    fn plugin_id(&self) -> &str {
        FL_PLUGIN_ID
    }

    fn execute(
        &self,
        materials: &TaskMaterials,
        store: &StoreView<'_>,
        ctx: &mut ExecutionContext<'_>,
    ) -> Result<Payload, PluginError> {
        let payload: FlTaskPayload = serde_json::from_value(materials.payload_json()?)
            .map_err(|e| PluginError::failed(format!("malformed training payload: {e}")))?;
        let model_blob = materials.blob(&payload.model_blob_ref).ok_or_else(|| {
            PluginError::failed(format!("model blob {} missing", payload.model_blob_ref))
        })?;
        let global: ModelParameters = serde_json::from_slice(&model_blob.bytes)
            .map_err(|e| PluginError::failed(format!("malformed model: {e}")))?;

        let dataset = Self::dataset(store, &payload.data_key);
        if dataset.is_empty() {
            return Err(PluginError::EmptyDataset);
        }

        let spec = TrainSpec {
            objective: payload.objective,
            epochs: payload.epochs,
            learning_rate: payload.learning_rate,
            batch_size: payload.batch_size,
        };
        let total = spec.epochs.max(1) as f64;
        ctx.checkpoint(0.1, MILLIS_PER_EPOCH * total as u64)?;

        let update = local_train(&global, &dataset, &spec, ctx.rng()).map_err(|e| match e {
            PflError::EmptyDataset => PluginError::EmptyDataset,
            other => PluginError::failed(other.to_string()),
        })?;

        let privacy = PrivacyConfig {
            clip_bound: payload.clip_bound,
            sigma_local: payload.sigma_local,
            sigma_central: 0.0,
        };
        let update = privatize_local(update, &privacy, ctx.rng())
            .map_err(|e| PluginError::failed(e.to_string()))?;

        ctx.checkpoint(0.9, MILLIS_PER_EPOCH)?;
        let mut seal_seed = [0u8; 32];
        rand::RngCore::fill_bytes(ctx.rng(), &mut seal_seed);
        let envelope = seal(&update, &payload.round_public_key, seal_seed)
            .map_err(|e| PluginError::failed(e.to_string()))?;

        let value =
            serde_json::to_value(&envelope).map_err(|e| PluginError::failed(e.to_string()))?;
        match value {
            serde_json::Value::Object(map) => Ok(map),
            _ => Err(PluginError::failed("unexpected envelope shape")),
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

    use crate::seal::{unseal, RoundKeypair};

    fn fl_record(x: Vec<f64>, y: f64) -> DataRecord {
        let mut payload = RecordPayload::new();
        payload.insert("x".into(), serde_json::json!(x));
        payload.insert("y".into(), serde_json::json!(y));
        DataRecord::new("fl_regression", payload, VirtualTime::ZERO)
    }

    fn materials(keypair: &RoundKeypair) -> TaskMaterials {
        let model = ModelParameters::zeros(2);
        let model_blob = AttachmentBlob::new(to_canonical_json(&model).unwrap());
        let payload = FlTaskPayload {
            model_blob_ref: model_blob.content_hash.clone(),
            objective: Objective::LeastSquares,
            epochs: 1,
            learning_rate: 0.1,
            batch_size: None,
            clip_bound: 10.0,
            sigma_local: 0.0,
            round_public_key: keypair.public(),
            data_key: "fl_regression".into(),
        };
        let payload_blob = AttachmentBlob::new(to_canonical_json(&payload).unwrap());
        let descriptor = TaskDescriptor {
            task_id: "fl-test".into(),
            plugin_id: FL_PLUGIN_ID.into(),
            sampling_rate: 1.0,
            preconditions: vec![],
            attachment_refs: vec![payload_blob.content_hash.clone(), model_blob.content_hash.clone()],
            target_result_count: 1,
            active_window: ActiveWindow::new(VirtualTime::ZERO, VirtualTime::from_days(1)),
            payload_schema_version: 1,
        };
        TaskMaterials::new(descriptor, vec![payload_blob, model_blob])
    }

    #[test]
    fn produces_sealed_update_the_coordinator_can_open() {
        let keypair = RoundKeypair::generate(0, [5; 32]);
        let mut store = DataStore::new(true);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0);
        store.write(fl_record(vec![1.0, 0.0], 1.0), &mut rng);
        store.write(fl_record(vec![0.0, 2.0], 2.0), &mut rng);

        let outcome = execute_task(
            &FlTrainingPlugin,
            &materials(&keypair),
            &store.view().unwrap(),
            &AlwaysAvailable,
            600_000,
            [6; 32],
        );
        assert_eq!(outcome.status, TaskStatus::Completed);
        let payload = outcome.result_payload.unwrap();

        // Only the sealed form travels.
        let keys: Vec<&String> = payload.keys().collect();
        assert_eq!(keys, vec!["ciphertext", "round_key_id"]);

        let envelope: crate::seal::UpdateEnvelope =
            serde_json::from_value(serde_json::Value::Object(payload)).unwrap();
        let update = unseal(&envelope, &keypair).unwrap();
        assert_eq!(update.sample_count, 2);
        // Full-batch single step: delta = -lr * grad = (0.05, 0.2).
        assert!((update.delta[0] - 0.05).abs() < 1e-10);
        assert!((update.delta[1] - 0.2).abs() < 1e-10);
    }

    #[test]
    fn empty_store_skips_round() {
        let keypair = RoundKeypair::generate(0, [5; 32]);
        let store = DataStore::new(true);
        let outcome = execute_task(
            &FlTrainingPlugin,
            &materials(&keypair),
            &store.view().unwrap(),
            &AlwaysAvailable,
            600_000,
            [6; 32],
        );
        assert_eq!(outcome.status, TaskStatus::Failed);
        assert!(outcome.failure.unwrap().contains("no usable on-device data"));
    }
}
