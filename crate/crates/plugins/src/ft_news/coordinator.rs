//! The federated-tuning coordinator script.
//!
//! Per iteration: publish an FT task carrying the current search space,
//! collect the fleet's scored configurations, cluster and score them,
//! refine the space to the winning cluster's bounds and repeat until the
//! space has collapsed or the iteration budget is spent.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use fedtask_core::seed::derive_seed;
use fedtask_core::task::{ActiveWindow, Precondition};
use fedtask_core::wire::to_canonical_json;
use fedtask_core::{AttachmentBlob, FleetHandle, TaskDescriptor};

use super::model::PersonalizationParams;
use super::{cluster_and_score, refine_space, Configuration, FtError, ParameterSpace, ScoredConfiguration};

/// How on-device ground-truth labels are derived from raw interactions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelRule {
    /// Positive iff the article headline was tapped.
    Tapped,
    /// Positive iff the user spent at least this many seconds in the article.
    MinDwellSeconds { seconds: f64 },
}

/// Task payload published to devices for one FT iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FtTaskPayload {
    pub space: ParameterSpace,
    pub configs_per_device: usize,
    pub label_rule: LabelRule,
    /// Values for scorer parameters outside the search space.
    pub base: PersonalizationParams,
}

#[derive(Debug, Clone)]
pub struct FtRunConfig {
    pub task_prefix: String,
    pub data_key: String,
    pub configs_per_device: usize,
    pub cluster_count: usize,
    pub max_iterations: usize,
    /// Stop once every dimension has shrunk below this fraction of its
    /// initial width.
    pub convergence_eps: f64,
    pub label_rule: LabelRule,
    pub base: PersonalizationParams,
    pub sampling_rate: f64,
    pub target_result_count: u64,
    pub window_hours: u64,
    pub seed: u64,
}

impl Default for FtRunConfig {
    fn default() -> Self {
        FtRunConfig {
            task_prefix: "ft-news".into(),
            data_key: "news_interaction".into(),
            configs_per_device: 20,
            cluster_count: 8,
            max_iterations: 6,
            convergence_eps: 0.02,
            label_rule: LabelRule::Tapped,
            base: PersonalizationParams::default(),
            sampling_rate: 1.0,
            target_result_count: 500,
            window_hours: 48,
            seed: 0,
        }
    }
}

/// Coordinator view of one completed iteration.
#[derive(Debug, Clone, Serialize)]
pub struct FtIterationStats {
    pub iteration: usize,
    pub result_count: usize,
    pub point_count: usize,
    pub winner_score: f64,
    pub winner_mean_loss: f64,
    /// Refined bounds produced by this iteration.
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct FtOutcome {
    /// Centroid of the final winning cluster, in original units.
    pub best: Configuration,
    pub trajectory: Vec<FtIterationStats>,
    pub final_space: ParameterSpace,
}

/// Runs federated tuning to convergence.
pub fn run_ft(
    fleet: &mut dyn FleetHandle,
    initial_space: &ParameterSpace,
    cfg: &FtRunConfig,
) -> Result<FtOutcome, FtError> {
    initial_space.validate()?;
    let initial_widths: Vec<f64> = (0..initial_space.len()).map(|d| initial_space.width(d)).collect();

    let mut space = initial_space.clone();
    let mut trajectory = Vec::new();
    let mut best = None;

    for iteration in 1..=cfg.max_iterations {
        let payload = FtTaskPayload {
            space: space.clone(),
            configs_per_device: cfg.configs_per_device,
            label_rule: cfg.label_rule,
            base: cfg.base,
        };
        let blob = AttachmentBlob::new(to_canonical_json(&payload).expect("payload serializes"));
        let now = fleet.now();
        let descriptor = TaskDescriptor {
            task_id: format!("{}-iter{:02}", cfg.task_prefix, iteration),
            plugin_id: super::NEWS_PLUGIN_ID.into(),
            sampling_rate: cfg.sampling_rate,
            preconditions: vec![Precondition::data_key_present(cfg.data_key.clone())],
            attachment_refs: vec![blob.content_hash.clone()],
            target_result_count: cfg.target_result_count,
            active_window: ActiveWindow::new(now, now.plus_hours(cfg.window_hours)),
            payload_schema_version: 1,
        };
        let report = fleet.run_task(descriptor, vec![blob])?;

        let mut points: Vec<ScoredConfiguration> = Vec::new();
        for envelope in &report.envelopes {
            let Some(serde_json::Value::Array(scored)) = envelope.payload.get("scored") else {
                continue;
            };
            for value in scored {
                if let Ok(point) = serde_json::from_value::<ScoredConfiguration>(value.clone()) {
                    if point.is_valid_for(&space) {
                        points.push(point);
                    }
                }
            }
        }
        if points.is_empty() {
            return Err(FtError::NoResults { iteration });
        }

        let k = cfg.cluster_count.min(points.len());
        let mut rng = ChaCha12Rng::from_seed(derive_seed(cfg.seed, "ft-kmeans", iteration as u64));
        let (reports, winner_index) = cluster_and_score(&points, k, &space, &mut rng)?;
        let winner = &reports[winner_index];

        let refined = refine_space(winner, &space);
        debug_assert!(space.nests(&refined));

        trajectory.push(FtIterationStats {
            iteration,
            result_count: report.envelopes.len(),
            point_count: points.len(),
            winner_score: winner.score,
            winner_mean_loss: winner.mean_loss,
            bounds: refined.dims.iter().map(|d| (d.lo, d.hi)).collect(),
        });
        best = Some(winner.centroid.clone());

        let converged = refined
            .dims
            .iter()
            .enumerate()
            .all(|(d, dim)| {
                let initial = initial_widths[d];
                initial == 0.0 || (dim.hi - dim.lo) / initial < cfg.convergence_eps
            });
        space = refined;
        if converged {
            break;
        }
    }

    Ok(FtOutcome {
        best: best.expect("at least one iteration"),
        trajectory,
        final_space: space,
    })
}
