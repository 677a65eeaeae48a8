//! The FL training script: coordinates model training across rounds.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use fedtask_core::seed::derive_seed;
use fedtask_core::task::{ActiveWindow, Precondition};
use fedtask_core::wire::to_canonical_json;
use fedtask_core::{AttachmentBlob, FleetHandle, TaskDescriptor};

use crate::aggregate::AggregationService;
use crate::model::{LocalDataset, ModelParameters};
use crate::plugin::{FlTaskPayload, FL_PLUGIN_ID};
use crate::privacy::{privatize_central, PrivacyConfig};
use crate::seal::{RoundKeypair, UpdateEnvelope};
use crate::train::{loss, Objective, TrainSpec};
use crate::PflError;

#[derive(Debug, Clone)]
pub struct FlRunConfig {
    pub task_prefix: String,
    pub data_key: String,
    pub rounds: u64,
    /// Aggregation trigger: number of updates per round.
    pub cohort_target: u64,
    pub privacy: PrivacyConfig,
    pub train: TrainSpec,
    pub sampling_rate: f64,
    pub window_hours: u64,
    /// Additional attempts when a round collects too few updates.
    pub retry_limit: usize,
    pub seed: u64,
}

impl Default for FlRunConfig {
    fn default() -> Self {
        FlRunConfig {
            task_prefix: "fl".into(),
            data_key: "fl_regression".into(),
            rounds: 10,
            cohort_target: 50,
            privacy: PrivacyConfig { clip_bound: 10.0, sigma_local: 0.0, sigma_central: 0.0 },
            train: TrainSpec {
                objective: Objective::LeastSquares,
                epochs: 1,
                learning_rate: 0.5,
                batch_size: None,
            },
            sampling_rate: 1.0,
            window_hours: 48,
            retry_limit: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FlRoundMetrics {
    pub round: u64,
    pub updates_used: usize,
    pub updates_excluded: usize,
    pub retries: usize,
    /// Loss of the released model on the coordinator's held-out set.
    pub heldout_loss: f64,
}

/// Runs `rounds` federated-averaging iterations and returns the final
/// model plus per-round metrics.
pub fn fl_training_loop(
    fleet: &mut dyn FleetHandle,
    initial: ModelParameters,
    cfg: &FlRunConfig,
    heldout: &LocalDataset,
) -> Result<(ModelParameters, Vec<FlRoundMetrics>), PflError> {
    cfg.privacy.validate()?;
    let mut model = initial;
    let mut metrics = Vec::new();

    for round in 0..cfg.rounds {
        let mut attempt = 0usize;
        loop {
            let key_seed = derive_seed(cfg.seed, "fl-round-key", round * 1_000 + attempt as u64);
            let keypair = RoundKeypair::generate(round, key_seed);
            let mut service = AggregationService::new(keypair);

            let model_blob = AttachmentBlob::new(
                to_canonical_json(&model).map_err(|e| PflError::SealFailure(e.to_string()))?,
            );
            let payload = FlTaskPayload {
                model_blob_ref: model_blob.content_hash.clone(),
                objective: cfg.train.objective,
                epochs: cfg.train.epochs,
                learning_rate: cfg.train.learning_rate,
                batch_size: cfg.train.batch_size,
                clip_bound: cfg.privacy.clip_bound,
                sigma_local: cfg.privacy.sigma_local,
                round_public_key: service.round_public_key()?,
                data_key: cfg.data_key.clone(),
            };
            let payload_blob = AttachmentBlob::new(
                to_canonical_json(&payload).map_err(|e| PflError::SealFailure(e.to_string()))?,
            );

            let now = fleet.now();
            let descriptor = TaskDescriptor {
                task_id: format!("{}-r{:03}-a{}", cfg.task_prefix, round, attempt),
                plugin_id: FL_PLUGIN_ID.into(),
                sampling_rate: cfg.sampling_rate,
                preconditions: vec![Precondition::data_key_present(cfg.data_key.clone())],
                attachment_refs: vec![
                    payload_blob.content_hash.clone(),
                    model_blob.content_hash.clone(),
                ],
                target_result_count: cfg.cohort_target,
                active_window: ActiveWindow::new(now, now.plus_hours(cfg.window_hours)),
                payload_schema_version: 1,
            };

            let report = fleet.run_task(descriptor, vec![payload_blob, model_blob])?;
            let envelopes: Vec<UpdateEnvelope> = report
                .envelopes
                .iter()
                .filter_map(|envelope| {
                    serde_json::from_value(serde_json::Value::Object(envelope.payload.clone())).ok()
                })
                .collect();

            let mut shuffle_rng = ChaCha12Rng::from_seed(derive_seed(
                cfg.seed,
                "fl-shuffle",
                round * 1_000 + attempt as u64,
            ));
            match service.aggregate_and_discard(&envelopes, cfg.cohort_target as usize, &mut shuffle_rng)
            {
                Ok(outcome) => {
                    let mut noise_rng =
                        ChaCha12Rng::from_seed(derive_seed(cfg.seed, "fl-central-noise", round));
                    let released = privatize_central(outcome.update, &cfg.privacy, &mut noise_rng)?;
                    model.apply(&released)?;
                    metrics.push(FlRoundMetrics {
                        round,
                        updates_used: outcome.used,
                        updates_excluded: outcome.excluded,
                        retries: attempt,
                        heldout_loss: loss(cfg.train.objective, &model.weights, heldout),
                    });
                    break;
                }
                Err(PflError::TriggerNotMet { .. }) | Err(PflError::RoundFailed { .. })
                    if attempt < cfg.retry_limit =>
                {
                    attempt += 1;
                }
                Err(PflError::TriggerNotMet { .. }) | Err(PflError::RoundFailed { .. }) => {
                    return Err(PflError::RoundRetriesExhausted { round, attempts: attempt + 1 });
                }
                Err(other) => return Err(other),
            }
        }
    }

    Ok((model, metrics))
}
