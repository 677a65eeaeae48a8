//! The on-device federated-tuning plug-in.

use fedtask_core::envelope::Payload;
use fedtask_device::{ExecutionContext, PluginError, StoreView, TaskMaterials, TaskPlugin};

use super::coordinator::{FtTaskPayload, LabelRule};
use super::model::{evaluate_config, sample_configurations};
use super::{InteractionDataset, NewsItem, ScoredConfiguration};

pub const NEWS_PLUGIN_ID: &str = "news_tuning";

/// Estimated per-configuration evaluation cost charged to the deadline.
const MILLIS_PER_CONFIG: u64 = 5;

/// Runs the randomized grid search against locally stored news
/// interactions and reports (configuration, loss) pairs.
#[derive(Debug, Clone)]
pub struct NewsTuningPlugin {
    pub data_key: String,
}

impl Default for NewsTuningPlugin {
    fn default() -> Self {
        NewsTuningPlugin { data_key: "news_interaction".into() }
    }
}

impl NewsTuningPlugin {
    fn dataset(&self, store: &StoreView<'_>, rule: LabelRule) -> InteractionDataset {
        let mut items = Vec::new();
        for record in store.records_for_key(&self.data_key) {
            let Some(age_hours) = record.payload.get("age_hours").and_then(|v| v.as_f64()) else {
                continue;
            };
            let Some(affinities) = record.payload.get("topic_affinities").and_then(|v| v.as_array())
            else {
                continue;
            };
            let topic_affinities: Vec<f64> = affinities.iter().filter_map(|v| v.as_f64()).collect();
            let source_quality =
                record.payload.get("source_quality").and_then(|v| v.as_f64()).unwrap_or(0.5);
            let label = match rule {
                LabelRule::Tapped => {
                    record.payload.get("tapped").and_then(|v| v.as_bool()).unwrap_or(false)
                }
                LabelRule::MinDwellSeconds { seconds } => record
                    .payload
                    .get("dwell_seconds")
                    .and_then(|v| v.as_f64())
                    .is_some_and(|dwell| dwell >= seconds),
            };
            items.push(NewsItem { age_hours, topic_affinities, source_quality, label });
        }
        InteractionDataset { items }
    }
}

impl TaskPlugin for NewsTuningPlugin {
    fn plugin_id(&self) -> &str {
        NEWS_PLUGIN_ID
    }

    fn execute(
        &self,
        materials: &TaskMaterials,
        store: &StoreView<'_>,
        ctx: &mut ExecutionContext<'_>,
    ) -> Result<Payload, PluginError> {
        let payload: FtTaskPayload = serde_json::from_value(materials.payload_json()?)
            .map_err(|e| PluginError::failed(format!("malformed tuning payload: {e}")))?;
        let dataset = self.dataset(store, payload.label_rule);
        if dataset.items.is_empty() {
            return Err(PluginError::EmptyDataset);
        }

        let configs = sample_configurations(&payload.space, payload.configs_per_device, ctx.rng());
        let total = configs.len().max(1);
        let mut scored = Vec::with_capacity(configs.len());
        for (i, config) in configs.into_iter().enumerate() {
            ctx.checkpoint((i + 1) as f64 / total as f64, MILLIS_PER_CONFIG)?;
            let loss = evaluate_config(&payload.space, &config, &payload.base, &dataset)
                .map_err(|e| PluginError::failed(e.to_string()))?;
            scored.push(ScoredConfiguration { values: config.values, loss });
        }

        let mut result = Payload::new();
        result.insert(
            "scored".into(),
            serde_json::to_value(&scored).map_err(|e| PluginError::failed(e.to_string()))?,
        );
        Ok(result)
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

    use crate::ft_news::{ParameterSpace, PersonalizationParams};

    fn news_record(age_hours: f64, affinity: f64, tapped: bool, dwell: f64) -> DataRecord {
        let mut payload = RecordPayload::new();
        payload.insert("age_hours".into(), serde_json::json!(age_hours));
        payload.insert("topic_affinities".into(), serde_json::json!([affinity]));
        payload.insert("source_quality".into(), serde_json::json!(0.7));
        payload.insert("tapped".into(), serde_json::json!(tapped));
        payload.insert("dwell_seconds".into(), serde_json::json!(dwell));
        DataRecord::new("news_interaction", payload, VirtualTime::ZERO)
    }

    fn materials(rule: LabelRule) -> TaskMaterials {
        let payload = FtTaskPayload {
            space: ParameterSpace::new(vec![("bias", -2.0, 2.0)]).unwrap(),
            configs_per_device: 7,
            label_rule: rule,
            base: PersonalizationParams::default(),
        };
        let blob = AttachmentBlob::new(to_canonical_json(&payload).unwrap());
        let descriptor = TaskDescriptor {
            task_id: "ft-test".into(),
            plugin_id: NEWS_PLUGIN_ID.into(),
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
    fn reports_one_loss_per_sampled_config() {
        let mut store = DataStore::new(true);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0);
        for i in 0..5 {
            store.write(news_record(i as f64, 0.8, i % 2 == 0, 3.0), &mut rng);
        }
        let outcome = execute_task(
            &NewsTuningPlugin::default(),
            &materials(LabelRule::Tapped),
            &store.view().unwrap(),
            &AlwaysAvailable,
            60_000,
            [1; 32],
        );
        assert_eq!(outcome.status, TaskStatus::Completed);
        let payload = outcome.result_payload.unwrap();
        let scored = payload["scored"].as_array().unwrap();
        assert_eq!(scored.len(), 7);
        for point in scored {
            assert!(point["loss"].as_f64().unwrap().is_finite());
        }
    }

    #[test]
    fn dwell_rule_changes_labels() {
        let mut store = DataStore::new(true);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0);
        store.write(news_record(1.0, 0.9, false, 30.0), &mut rng);
        let plugin = NewsTuningPlugin::default();
        let view = store.view().unwrap();
        let tapped = plugin.dataset(&view, LabelRule::Tapped);
        let dwell = plugin.dataset(&view, LabelRule::MinDwellSeconds { seconds: 10.0 });
        assert!(!tapped.items[0].label);
        assert!(dwell.items[0].label);
    }

    #[test]
    fn empty_store_fails_with_empty_dataset() {
        let store = DataStore::new(true);
        let outcome = execute_task(
            &NewsTuningPlugin::default(),
            &materials(LabelRule::Tapped),
            &store.view().unwrap(),
            &AlwaysAvailable,
            60_000,
            [1; 32],
        );
        assert_eq!(outcome.status, TaskStatus::Failed);
    }
}
