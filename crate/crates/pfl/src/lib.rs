//! Private federated learning additions.
//!
//! On-device model training (federated averaging), a local privacy manager
//! that clips and noises updates, round-keyed sealed-box encryption of
//! updates, a count-triggered in-memory aggregation service, a global
//! privacy manager for central noise, and the training-loop coordinator.

pub mod aggregate;
pub mod model;
pub mod perceptron;
pub mod plugin;
pub mod privacy;
pub mod seal;
pub mod train;
pub mod training_loop;

pub use aggregate::{aggregate, average_updates, AggregateOutcome, AggregationService};
pub use model::{LocalDataset, ModelParameters, ModelUpdate};
pub use plugin::{FlTrainingPlugin, FL_PLUGIN_ID};
pub use privacy::{clip_to_norm, privatize_central, privatize_local, PrivacyConfig};
pub use seal::{seal, unseal, RoundKeypair, RoundPublicKey, UpdateEnvelope};
pub use train::{local_train, Objective, TrainSpec};
pub use training_loop::{fl_training_loop, FlRoundMetrics, FlRunConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PflError {
    #[error("dataset is empty; device skips the round")]
    EmptyDataset,
    #[error("model/update dimension mismatch: {expected} vs {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid privacy config: {0}")]
    InvalidPrivacyConfig(String),
    #[error("sealed envelope was made for round key {envelope}, not {expected}")]
    WrongRoundKey { envelope: String, expected: String },
    #[error("ciphertext rejected: {0}")]
    SealFailure(String),
    #[error("round private key already discarded")]
    KeyDiscarded,
    #[error("aggregation trigger not met: {available} of {target} updates")]
    TriggerNotMet { available: usize, target: usize },
    #[error("round failed: only {valid} valid updates of {target} required")]
    RoundFailed { valid: usize, target: usize },
    #[error("round {round} failed after {attempts} attempts")]
    RoundRetriesExhausted { round: u64, attempts: usize },
    #[error(transparent)]
    Fleet(#[from] fedtask_core::FleetError),
}
