//! The coordinator-facing fleet abstraction.
//!
//! Server-side coordinator scripts (federated tuning, evaluation and
//! learning loops) publish a task, wait for it to retire and read back the
//! stored results. [`FleetHandle`] captures exactly that cycle so the
//! coordinators stay independent of how devices are driven (in-process
//! simulation, threads, or a live service).

use thiserror::Error;

use crate::envelope::ResultEnvelope;
use crate::task::TaskDescriptor;
use crate::time::VirtualTime;
use crate::wire::content_hash;

/// A content-addressed blob published alongside a task descriptor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttachmentBlob {
    pub content_hash: String,
    pub bytes: Vec<u8>,
}

impl AttachmentBlob {
    pub fn new(bytes: Vec<u8>) -> Self {
        AttachmentBlob { content_hash: content_hash(&bytes), bytes }
    }
}

/// Results of one published task after retirement.
#[derive(Debug, Clone, Default)]
pub struct TaskRunReport {
    /// Stored envelopes in the server's stable fetch order.
    pub envelopes: Vec<ResultEnvelope>,
}

#[derive(Debug, Error)]
pub enum FleetError {
    #[error("task publication failed: {0}")]
    Publish(String),
    #[error("no results received for task {task_id}")]
    NoResults { task_id: String },
    #[error("fleet failure: {0}")]
    Other(String),
}

/// Publishes tasks to a device fleet and collects their results.
pub trait FleetHandle {
    /// Current virtual time, used to stamp task activity windows.
    fn now(&self) -> VirtualTime;

    /// Publishes the task, drives the fleet until the task retires (or its
    /// window closes) and returns the stored results.
    fn run_task(
        &mut self,
        descriptor: TaskDescriptor,
        attachments: Vec<AttachmentBlob>,
    ) -> Result<TaskRunReport, FleetError>;
}
