//! Plug-in execution with deadline and availability monitoring.
//!
//! Task interpretation is delegated to application-specific plug-ins. A
//! plug-in receives the downloaded task materials, a read-only view of the
//! data store and an [`ExecutionContext`] through which it reports progress.
//! Each progress checkpoint charges execution time and gives the runtime a
//! chance to abort the task, for example when the device is disconnected
//! from power mid-run or the deadline is exceeded.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use fedtask_core::envelope::Payload;
use fedtask_core::{AttachmentBlob, TaskDescriptor};

use crate::store::StoreView;

/// Reports whether the device still satisfies execution conditions at a
/// given progress fraction.
pub trait AvailabilityOracle {
    fn power_connected(&self, progress: f64) -> bool;
}

impl<F: Fn(f64) -> bool> AvailabilityOracle for F {
    fn power_connected(&self, progress: f64) -> bool {
        self(progress)
    }
}

/// Always-available oracle.
pub struct AlwaysAvailable;

impl AvailabilityOracle for AlwaysAvailable {
    fn power_connected(&self, _progress: f64) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TaskAbort {
    #[error("device disconnected from power")]
    PowerDisconnected,
    #[error("task deadline exceeded")]
    DeadlineExceeded,
}

#[derive(Debug, Error)]
pub enum PluginError {
    #[error("no usable on-device data")]
    EmptyDataset,
    #[error(transparent)]
    Aborted(#[from] TaskAbort),
    #[error("plug-in failure: {0}")]
    Failed(String),
}

impl PluginError {
    pub fn failed(message: impl Into<String>) -> Self {
        PluginError::Failed(message.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Completed,
    AbortedPower,
    AbortedTimeout,
    Failed,
}

/// Result of one plug-in execution. `result_payload` is present iff the
/// task completed.
#[derive(Debug, Clone)]
pub struct TaskOutcome {
    pub status: TaskStatus,
    pub result_payload: Option<Payload>,
    pub exec_millis: u64,
    /// Populated for `Failed` outcomes, for telemetry.
    pub failure: Option<String>,
}

/// The downloaded task: descriptor plus content-addressed attachments in
/// `attachment_refs` order. By convention the first attachment carries the
/// plug-in task payload.
#[derive(Debug, Clone)]
pub struct TaskMaterials {
    pub descriptor: TaskDescriptor,
    pub attachments: Vec<AttachmentBlob>,
}

impl TaskMaterials {
    pub fn new(descriptor: TaskDescriptor, attachments: Vec<AttachmentBlob>) -> Self {
        TaskMaterials { descriptor, attachments }
    }

    /// Parses the first attachment as the plug-in task payload.
    pub fn payload_json(&self) -> Result<serde_json::Value, PluginError> {
        let blob = self
            .attachments
            .first()
            .ok_or_else(|| PluginError::failed("task has no payload attachment"))?;
        serde_json::from_slice(&blob.bytes)
            .map_err(|e| PluginError::failed(format!("malformed task payload: {e}")))
    }

    pub fn blob(&self, content_hash: &str) -> Option<&AttachmentBlob> {
        self.attachments.iter().find(|a| a.content_hash == content_hash)
    }
}

/// Execution-side services handed to a plug-in: progress checkpoints,
/// accumulated virtual execution time and a deterministic per-execution RNG.
pub struct ExecutionContext<'a> {
    oracle: &'a dyn AvailabilityOracle,
    deadline_millis: u64,
    elapsed_millis: u64,
    rng: ChaCha12Rng,
}

impl<'a> ExecutionContext<'a> {
    pub fn new(oracle: &'a dyn AvailabilityOracle, deadline_millis: u64, rng_seed: [u8; 32]) -> Self {
        ExecutionContext {
            oracle,
            deadline_millis,
            elapsed_millis: 0,
            rng: ChaCha12Rng::from_seed(rng_seed),
        }
    }

    /// Charges `millis_spent` of virtual execution time and asks the runtime
    /// whether to continue. Plug-ins must call this periodically.
    pub fn checkpoint(&mut self, progress: f64, millis_spent: u64) -> Result<(), TaskAbort> {
        self.elapsed_millis += millis_spent;
        if !self.oracle.power_connected(progress) {
            return Err(TaskAbort::PowerDisconnected);
        }
        if self.elapsed_millis > self.deadline_millis {
            return Err(TaskAbort::DeadlineExceeded);
        }
        Ok(())
    }

    pub fn elapsed_millis(&self) -> u64 {
        self.elapsed_millis
    }

    pub fn rng(&mut self) -> &mut ChaCha12Rng {
        &mut self.rng
    }
}

/// The behavioral contract for application plug-ins. Plug-ins receive a
/// read-only store view and cannot write the data store during execution.
pub trait TaskPlugin: Send + Sync {
    fn plugin_id(&self) -> &str;

    fn execute(
        &self,
        materials: &TaskMaterials,
        store: &StoreView<'_>,
        ctx: &mut ExecutionContext<'_>,
    ) -> Result<Payload, PluginError>;
}

/// Runs a plug-in under monitoring and classifies the outcome.
pub fn execute_task(
    plugin: &dyn TaskPlugin,
    materials: &TaskMaterials,
    store: &StoreView<'_>,
    oracle: &dyn AvailabilityOracle,
    deadline_millis: u64,
    rng_seed: [u8; 32],
) -> TaskOutcome {
    let mut ctx = ExecutionContext::new(oracle, deadline_millis, rng_seed);
    match plugin.execute(materials, store, &mut ctx) {
        Ok(payload) => TaskOutcome {
            status: TaskStatus::Completed,
            result_payload: Some(payload),
            exec_millis: ctx.elapsed_millis(),
            failure: None,
        },
        Err(PluginError::Aborted(TaskAbort::PowerDisconnected)) => TaskOutcome {
            status: TaskStatus::AbortedPower,
            result_payload: None,
            exec_millis: ctx.elapsed_millis(),
            failure: None,
        },
        Err(PluginError::Aborted(TaskAbort::DeadlineExceeded)) => TaskOutcome {
            status: TaskStatus::AbortedTimeout,
            result_payload: None,
            exec_millis: ctx.elapsed_millis(),
            failure: None,
        },
        Err(error) => TaskOutcome {
            status: TaskStatus::Failed,
            result_payload: None,
            exec_millis: ctx.elapsed_millis(),
            failure: Some(error.to_string()),
        },
    }
}
