//! Published federated tasks and their preconditions.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::time::VirtualTime;

/// Scalar values that preconditions compare against.
///
/// Untagged on the wire: JSON booleans, integers and strings map directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarValue {
    Bool(bool),
    Int(i64),
    Str(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredicateOp {
    Equals,
    Gte,
    Lte,
    Present,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionKind {
    /// Evaluated against a device-global attribute (OS version, device type, ...).
    DeviceAttribute,
    /// Holds iff the named key exists in the on-device data store.
    DataKey,
}

/// A single gate on task execution, evaluated on-device by [`crate::matching::matches`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Precondition {
    pub kind: PreconditionKind,
    pub attribute_name: String,
    pub predicate: PredicateOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<ScalarValue>,
}

impl Precondition {
    pub fn device_attribute(name: impl Into<String>, predicate: PredicateOp, value: ScalarValue) -> Self {
        Precondition {
            kind: PreconditionKind::DeviceAttribute,
            attribute_name: name.into(),
            predicate,
            value: Some(value),
        }
    }

    pub fn data_key_present(key: impl Into<String>) -> Self {
        Precondition {
            kind: PreconditionKind::DataKey,
            attribute_name: key.into(),
            predicate: PredicateOp::Present,
            value: None,
        }
    }

    /// Checks the predicate/value pairing. `gte`/`lte` compare integers,
    /// `equals` accepts any scalar, `present` takes no value, and data-key
    /// preconditions only support `present`.
    pub fn validate(&self) -> Result<(), ModelError> {
        let malformed = |reason: &str| ModelError::MalformedPrecondition {
            attribute: self.attribute_name.clone(),
            reason: reason.to_string(),
        };
        if self.kind == PreconditionKind::DataKey && self.predicate != PredicateOp::Present {
            return Err(malformed("data_key preconditions use predicate `present` only"));
        }
        match self.predicate {
            PredicateOp::Present => {
                if self.value.is_some() {
                    return Err(malformed("`present` takes no value"));
                }
            }
            PredicateOp::Equals => {
                if self.value.is_none() {
                    return Err(malformed("`equals` requires a value"));
                }
            }
            PredicateOp::Gte | PredicateOp::Lte => match self.value {
                Some(ScalarValue::Int(_)) => {}
                _ => return Err(malformed("ordered predicates require an integer value")),
            },
        }
        Ok(())
    }
}

/// Inclusive-start, inclusive-end activity window. A task is schedulable
/// while `start <= now <= end` and retired by the server once `now > end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveWindow {
    pub start: VirtualTime,
    pub end: VirtualTime,
}

impl ActiveWindow {
    pub fn new(start: VirtualTime, end: VirtualTime) -> Self {
        ActiveWindow { start, end }
    }

    pub fn contains(&self, now: VirtualTime) -> bool {
        self.start <= now && now <= self.end
    }
}

/// A published federated task: plug-in binding, sampling rate, preconditions,
/// attachments and retirement targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDescriptor {
    pub task_id: String,
    pub plugin_id: String,
    /// Per-cycle probability with which a matching device selects this task.
    pub sampling_rate: f64,
    #[serde(default)]
    pub preconditions: Vec<Precondition>,
    /// Content addresses of the task payload and any attachments (models,
    /// parameter spaces, ...). By convention the first entry is the plug-in
    /// task payload.
    #[serde(default)]
    pub attachment_refs: Vec<String>,
    /// The task retires once this many results have been stored.
    pub target_result_count: u64,
    pub active_window: ActiveWindow,
    pub payload_schema_version: u32,
}

impl TaskDescriptor {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.task_id.is_empty() {
            return Err(ModelError::invalid("task_id", "must be non-empty"));
        }
        if self.plugin_id.is_empty() {
            return Err(ModelError::invalid("plugin_id", "must be non-empty"));
        }
        if !(0.0..=1.0).contains(&self.sampling_rate) || !self.sampling_rate.is_finite() {
            return Err(ModelError::invalid(
                "sampling_rate",
                format!("{} outside [0, 1]", self.sampling_rate),
            ));
        }
        if self.active_window.start >= self.active_window.end {
            return Err(ModelError::invalid("active_window", "start must precede end"));
        }
        if self.target_result_count < 1 {
            return Err(ModelError::invalid("target_result_count", "must be >= 1"));
        }
        for precondition in &self.preconditions {
            precondition.validate()?;
        }
        Ok(())
    }

    pub fn is_active(&self, now: VirtualTime) -> bool {
        self.active_window.contains(now)
    }
}
