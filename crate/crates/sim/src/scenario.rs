//! Scenario configuration: fleet shape, synthetic data, and the program
//! that drives tasks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use fedtask_core::TaskDescriptor;
use fedtask_plugins::ft_news::{LabelRule, PersonalizationParams};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn default_one() -> f64 {
    1.0
}

fn default_wake_interval() -> u64 {
    1
}

fn default_deadline() -> u64 {
    600_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AvailabilityModel {
    /// Probability a device is awake and eligible (power, idle, unmetered)
    /// in a given cycle.
    #[serde(default = "default_one")]
    pub duty_cycle: f64,
    #[serde(default = "default_wake_interval")]
    pub wake_interval_hours: u64,
}

impl Default for AvailabilityModel {
    fn default() -> Self {
        AvailabilityModel { duty_cycle: 1.0, wake_interval_hours: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ServerTuning {
    pub retention_days: u32,
    pub throttle_rate_per_sec: f64,
    pub throttle_burst: f64,
    pub page_size: usize,
}

impl Default for ServerTuning {
    fn default() -> Self {
        // High throttle ceiling by default: throttling scenarios opt in.
        ServerTuning {
            retention_days: 30,
            throttle_rate_per_sec: 1e9,
            throttle_burst: 1e9,
            page_size: 100,
        }
    }
}

fn default_news_items() -> usize {
    30
}

fn default_topics() -> usize {
    3
}

fn default_max_age_hours() -> f64 {
    72.0
}

fn default_news_key() -> String {
    "news_interaction".into()
}

/// Synthetic news-interaction data: labels are drawn from the true scorer
/// so the planted parameters are the population optimum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewsDataSpec {
    #[serde(default = "default_news_items")]
    pub items_per_device: usize,
    pub true_params: PersonalizationParams,
    #[serde(default = "default_topics")]
    pub topic_count: usize,
    #[serde(default = "default_max_age_hours")]
    pub max_age_hours: f64,
    #[serde(default = "default_news_key")]
    pub data_key: String,
    /// Dwell threshold used by the min-dwell label rule, seconds.
    #[serde(default = "default_dwell_threshold")]
    pub dwell_threshold_seconds: f64,
}

fn default_dwell_threshold() -> f64 {
    10.0
}

fn default_utterances() -> usize {
    10
}

fn default_vocab() -> usize {
    5_000
}

fn default_zipf_s() -> f64 {
    1.1
}

fn default_ref_len() -> (usize, usize) {
    (3, 12)
}

fn default_asr_key() -> String {
    "dictation_audio".into()
}

/// Synthetic speech-recognition data. References come from a Zipfian
/// vocabulary; hypotheses corrupt them by substitution (from a disjoint
/// error vocabulary, so substitutions never alias reference words) and
/// deletion. Word features correlate with correctness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsrDataSpec {
    #[serde(default = "default_utterances")]
    pub utterances_per_device: usize,
    #[serde(default = "default_vocab")]
    pub vocab_size: usize,
    #[serde(default = "default_zipf_s")]
    pub zipf_exponent: f64,
    #[serde(default = "default_ref_len")]
    pub ref_len_range: (usize, usize),
    pub p_sub: f64,
    #[serde(default)]
    pub p_del: f64,
    /// Fraction of utterances that are background noise only: empty
    /// reference, hallucinated low-confidence hypothesis words.
    #[serde(default)]
    pub no_speech_rate: f64,
    #[serde(default = "default_asr_key")]
    pub data_key: String,
}

fn default_fl_dim() -> usize {
    10
}

fn default_fl_samples() -> usize {
    50
}

fn default_fl_key() -> String {
    "fl_regression".into()
}

/// Synthetic least-squares data for FL: `y = x . w_true + noise`, with an
/// optional per-device feature-mean shift for non-IID fleets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlDataSpec {
    #[serde(default = "default_fl_dim")]
    pub dim: usize,
    #[serde(default = "default_fl_samples")]
    pub samples_per_device: usize,
    #[serde(default)]
    pub label_noise_std: f64,
    #[serde(default)]
    pub non_iid_skew: f64,
    #[serde(default = "default_fl_key")]
    pub data_key: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DataSpec {
    #[serde(default)]
    pub news: Option<NewsDataSpec>,
    #[serde(default)]
    pub asr: Option<AsrDataSpec>,
    #[serde(default)]
    pub fl: Option<FlDataSpec>,
}

/// One directly published task for basic scheduling scenarios; executed by
/// the built-in echo plug-in unless another plug-in id is named.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub descriptor: TaskDescriptor,
    /// Optional plug-in payload, published as the first attachment.
    #[serde(default)]
    pub payload: Option<serde_json::Value>,
}

fn default_configs_per_device() -> usize {
    20
}

fn default_cluster_count() -> usize {
    8
}

fn default_max_iterations() -> usize {
    6
}

fn default_eps() -> f64 {
    0.02
}

fn default_rate() -> f64 {
    1.0
}

fn default_window_hours() -> u64 {
    48
}

fn default_label_rule() -> LabelRule {
    LabelRule::Tapped
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FtProgram {
    /// Search-space dimensions: (name, lo, hi).
    pub space: Vec<(String, f64, f64)>,
    #[serde(default = "default_configs_per_device")]
    pub configs_per_device: usize,
    #[serde(default = "default_cluster_count")]
    pub cluster_count: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_eps")]
    pub convergence_eps: f64,
    #[serde(default = "default_label_rule")]
    pub label_rule: LabelRule,
    #[serde(default = "default_rate")]
    pub sampling_rate: f64,
    pub target_result_count: u64,
    #[serde(default = "default_window_hours")]
    pub window_hours: u64,
    /// Base scorer values for dimensions outside the search space; defaults
    /// to the generator's true parameters when omitted.
    #[serde(default)]
    pub base: Option<PersonalizationParams>,
}

fn default_central_set() -> usize {
    4_000
}

fn default_train_epochs() -> usize {
    300
}

fn default_noise_scale() -> f64 {
    0.08
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeProgram {
    /// Use the simulation-only perfect confidence oracle instead of a
    /// trained model.
    #[serde(default)]
    pub use_perfect_oracle: bool,
    /// Force rho instead of calibrating it centrally.
    #[serde(default)]
    pub fixed_rho: Option<f64>,
    #[serde(default = "default_central_set")]
    pub central_set_size: usize,
    #[serde(default = "default_train_epochs")]
    pub train_epochs: usize,
    #[serde(default = "default_noise_scale")]
    pub confidence_noise_scale: f64,
    #[serde(default = "default_rate")]
    pub sampling_rate: f64,
    pub target_result_count: u64,
    #[serde(default = "default_window_hours")]
    pub window_hours: u64,
}

fn default_rounds() -> u64 {
    10
}

fn default_retry_limit() -> usize {
    2
}

fn default_heldout() -> usize {
    500
}

fn default_clip() -> f64 {
    10.0
}

fn default_lr() -> f64 {
    0.5
}

fn default_epochs() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlProgram {
    #[serde(default = "default_rounds")]
    pub rounds: u64,
    pub cohort_target: u64,
    #[serde(default = "default_clip")]
    pub clip_bound: f64,
    #[serde(default)]
    pub sigma_local: f64,
    #[serde(default)]
    pub sigma_central: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default = "default_rate")]
    pub sampling_rate: f64,
    #[serde(default = "default_window_hours")]
    pub window_hours: u64,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: usize,
    #[serde(default = "default_heldout")]
    pub heldout_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Program {
    Tasks { tasks: Vec<TaskSpec> },
    Ft(FtProgram),
    Fe(FeProgram),
    Fl(FlProgram),
}

fn default_os_versions() -> Vec<(i64, f64)> {
    vec![(14, 0.4), (15, 0.6)]
}

fn default_device_types() -> Vec<(String, f64)> {
    vec![("phone".into(), 0.8), ("tablet".into(), 0.2)]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub fleet_size: usize,
    #[serde(default = "default_one")]
    pub opt_in_fraction: f64,
    pub master_seed: u64,
    #[serde(default)]
    pub availability: AvailabilityModel,
    #[serde(default = "default_os_versions")]
    pub os_versions: Vec<(i64, f64)>,
    #[serde(default = "default_device_types")]
    pub device_types: Vec<(String, f64)>,
    #[serde(default = "default_one")]
    pub unlocked_fraction: f64,
    #[serde(default)]
    pub transport_failure_rate: f64,
    #[serde(default = "default_deadline")]
    pub execution_deadline_millis: u64,
    #[serde(default)]
    pub server: ServerTuning,
    #[serde(default)]
    pub data: DataSpec,
    /// Persist the central results database under the output directory.
    #[serde(default)]
    pub persist_results: bool,
    pub program: Program,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.fleet_size < 1 {
            return Err(ScenarioError::Invalid("fleet_size must be >= 1".into()));
        }
        for (name, value) in [
            ("opt_in_fraction", self.opt_in_fraction),
            ("unlocked_fraction", self.unlocked_fraction),
            ("transport_failure_rate", self.transport_failure_rate),
            ("availability.duty_cycle", self.availability.duty_cycle),
        ] {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                return Err(ScenarioError::Invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.availability.wake_interval_hours == 0 {
            return Err(ScenarioError::Invalid("wake_interval_hours must be >= 1".into()));
        }
        if self.os_versions.is_empty() || self.device_types.is_empty() {
            return Err(ScenarioError::Invalid("os/device distributions must be non-empty".into()));
        }
        if let Some(asr) = &self.data.asr {
            for (name, value) in
                [("p_sub", asr.p_sub), ("p_del", asr.p_del), ("no_speech_rate", asr.no_speech_rate)]
            {
                if !(0.0..=1.0).contains(&value) {
                    return Err(ScenarioError::Invalid(format!("asr.{name} must lie in [0, 1]")));
                }
            }
            if asr.ref_len_range.0 < 1 || asr.ref_len_range.0 > asr.ref_len_range.1 {
                return Err(ScenarioError::Invalid("asr.ref_len_range must be ordered, min >= 1".into()));
            }
        }
        if let Program::Tasks { tasks } = &self.program {
            for task in tasks {
                task.descriptor
                    .validate()
                    .map_err(|e| ScenarioError::Invalid(format!("task {}: {e}", task.descriptor.task_id)))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(program: Program) -> ScenarioConfig {
        ScenarioConfig {
            fleet_size: 10,
            opt_in_fraction: 1.0,
            master_seed: 1,
            availability: AvailabilityModel::default(),
            os_versions: default_os_versions(),
            device_types: default_device_types(),
            unlocked_fraction: 1.0,
            transport_failure_rate: 0.0,
            execution_deadline_millis: 600_000,
            server: ServerTuning::default(),
            data: DataSpec::default(),
            persist_results: false,
            program,
        }
    }

    #[test]
    fn minimal_scenario_validates() {
        minimal(Program::Tasks { tasks: vec![] }).validate().unwrap();
    }

    #[test]
    fn bad_fractions_rejected() {
        let mut cfg = minimal(Program::Tasks { tasks: vec![] });
        cfg.opt_in_fraction = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = minimal(Program::Fl(FlProgram {
            rounds: 3,
            cohort_target: 5,
            clip_bound: 10.0,
            sigma_local: 0.0,
            sigma_central: 0.0,
            epochs: 1,
            learning_rate: 0.5,
            batch_size: None,
            sampling_rate: 1.0,
            window_hours: 24,
            retry_limit: 2,
            heldout_size: 100,
        }));
        let text = serde_json::to_string(&cfg).unwrap();
        let parsed: ScenarioConfig = serde_json::from_str(&text).unwrap();
        parsed.validate().unwrap();
        assert_eq!(parsed.fleet_size, 10);
    }
}
