//! The task manager: storage, publication and retirement of tasks and
//! their attachments.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use fedtask_core::wire::content_hash;
use fedtask_core::{AttachmentBlob, TaskDescriptor, VirtualTime};

use crate::service::ServerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Active,
    Retired,
}

#[derive(Debug, Clone)]
pub struct TaskEntry {
    pub descriptor: TaskDescriptor,
    pub status: TaskStatus,
    pub received_count: u64,
}

/// Registered tasks plus the content-addressed attachment store backing the
/// simulated CDN.
#[derive(Debug, Default)]
pub struct TaskRegistry {
    tasks: BTreeMap<String, TaskEntry>,
    blobs: BTreeMap<String, Vec<u8>>,
}

impl TaskRegistry {
    pub fn new() -> Self {
        TaskRegistry::default()
    }

    /// Publishes a task and its attachments to the CDN listing. Duplicate
    /// task ids and dangling attachment references are rejected.
    pub fn publish(
        &mut self,
        descriptor: TaskDescriptor,
        attachments: Vec<AttachmentBlob>,
    ) -> Result<(), ServerError> {
        descriptor.validate().map_err(|e| ServerError::InvalidDescriptor(e.to_string()))?;
        if self.tasks.contains_key(&descriptor.task_id) {
            return Err(ServerError::DuplicateTask(descriptor.task_id));
        }
        let mut staged: BTreeMap<String, Vec<u8>> = BTreeMap::new();
        for blob in attachments {
            let hash = content_hash(&blob.bytes);
            if hash != blob.content_hash {
                return Err(ServerError::AttachmentHashMismatch { expected: blob.content_hash, actual: hash });
            }
            staged.insert(hash, blob.bytes);
        }
        for reference in &descriptor.attachment_refs {
            if !staged.contains_key(reference) && !self.blobs.contains_key(reference) {
                return Err(ServerError::DanglingAttachment(reference.clone()));
            }
        }
        self.blobs.extend(staged);
        self.tasks.insert(
            descriptor.task_id.clone(),
            TaskEntry { descriptor, status: TaskStatus::Active, received_count: 0 },
        );
        Ok(())
    }

    /// Active descriptors for one plug-in, in task-id order (the CDN
    /// listing; devices shuffle client-side).
    pub fn listing(&self, plugin_id: &str, now: VirtualTime) -> Vec<TaskDescriptor> {
        self.tasks
            .values()
            .filter(|entry| {
                entry.status == TaskStatus::Active
                    && entry.descriptor.plugin_id == plugin_id
                    && entry.descriptor.is_active(now)
            })
            .map(|entry| entry.descriptor.clone())
            .collect()
    }

    pub fn blob(&self, hash: &str) -> Option<&[u8]> {
        self.blobs.get(hash).map(Vec::as_slice)
    }

    pub fn entry(&self, task_id: &str) -> Option<&TaskEntry> {
        self.tasks.get(task_id)
    }

    /// One-way transition to retired once the window has closed or the
    /// target result count has been reached.
    pub fn retire_check(&mut self, task_id: &str, now: VirtualTime) -> Result<TaskStatus, ServerError> {
        let entry =
            self.tasks.get_mut(task_id).ok_or_else(|| ServerError::UnknownTask(task_id.to_string()))?;
        if entry.status == TaskStatus::Active
            && (now > entry.descriptor.active_window.end
                || entry.received_count >= entry.descriptor.target_result_count)
        {
            entry.status = TaskStatus::Retired;
        }
        Ok(entry.status)
    }

    /// Applies the window-retirement rule to every task.
    pub fn sweep(&mut self, now: VirtualTime) {
        for entry in self.tasks.values_mut() {
            if entry.status == TaskStatus::Active
                && (now > entry.descriptor.active_window.end
                    || entry.received_count >= entry.descriptor.target_result_count)
            {
                entry.status = TaskStatus::Retired;
            }
        }
    }

    /// Records one stored result and retires the task if the target is met.
    /// Must only be called for active tasks (the ingest critical section
    /// checks first).
    pub fn record_result(&mut self, task_id: &str) -> Result<TaskStatus, ServerError> {
        let entry =
            self.tasks.get_mut(task_id).ok_or_else(|| ServerError::UnknownTask(task_id.to_string()))?;
        debug_assert_eq!(entry.status, TaskStatus::Active);
        entry.received_count += 1;
        if entry.received_count >= entry.descriptor.target_result_count {
            entry.status = TaskStatus::Retired;
        }
        Ok(entry.status)
    }

    pub fn task_ids(&self) -> Vec<String> {
        self.tasks.keys().cloned().collect()
    }
}
