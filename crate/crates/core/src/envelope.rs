//! Sanitized task results and health telemetry.
//!
//! A [`ResultEnvelope`] is the only object a device ever sends back for a
//! task. Its schema carries no device, user or network identifiers, and the
//! constructor rejects payloads that try to smuggle one in.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::time::VirtualTime;

/// Structured plug-in payloads. `serde_json`'s map keeps keys sorted, so
/// serialization is canonical.
pub type Payload = serde_json::Map<String, serde_json::Value>;

/// Field names that must never appear anywhere in a stored result, at any
/// nesting depth.
pub const FORBIDDEN_IDENTIFIER_FIELDS: [&str; 3] = ["device_id", "user_id", "ip_address"];

fn scan_forbidden(value: &serde_json::Value) -> Result<(), ModelError> {
    match value {
        serde_json::Value::Object(map) => {
            for (key, nested) in map {
                if FORBIDDEN_IDENTIFIER_FIELDS.contains(&key.as_str()) {
                    return Err(ModelError::ForbiddenField(key.clone()));
                }
                scan_forbidden(nested)?;
            }
            Ok(())
        }
        serde_json::Value::Array(items) => {
            for item in items {
                scan_forbidden(item)?;
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// A sanitized per-device task result. Unknown fields are rejected on
/// deserialization so that identifier fields cannot ride along.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultEnvelope {
    pub task_id: String,
    pub plugin_id: String,
    pub payload: Payload,
    /// Stamped by the server at ingestion; the device-side value is
    /// overwritten.
    pub received_at: VirtualTime,
}

impl ResultEnvelope {
    pub fn new(
        task_id: impl Into<String>,
        plugin_id: impl Into<String>,
        payload: Payload,
        received_at: VirtualTime,
    ) -> Result<Self, ModelError> {
        let envelope = ResultEnvelope {
            task_id: task_id.into(),
            plugin_id: plugin_id.into(),
            payload,
            received_at,
        };
        envelope.validate()?;
        Ok(envelope)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.task_id.is_empty() {
            return Err(ModelError::invalid("task_id", "must be non-empty"));
        }
        if self.plugin_id.is_empty() {
            return Err(ModelError::invalid("plugin_id", "must be non-empty"));
        }
        scan_forbidden(&serde_json::Value::Object(self.payload.clone()))
    }
}

/// Why a task produced no result, reported through telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    PluginFailed,
    AbortedPower,
    AbortedTimeout,
    EmptyDataset,
    TransportFailure,
}

impl ErrorCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCode::PluginFailed => "plugin_failed",
            ErrorCode::AbortedPower => "aborted_power",
            ErrorCode::AbortedTimeout => "aborted_timeout",
            ErrorCode::EmptyDataset => "empty_dataset",
            ErrorCode::TransportFailure => "transport_failure",
        }
    }
}

/// System-health telemetry: execution times, error conditions and the
/// amount of on-device data per key (used to gauge population sizes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub plugin_id: String,
    pub task_exec_millis: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_code: Option<ErrorCode>,
    /// Record counts per data key at reporting time.
    #[serde(default)]
    pub data_record_count: BTreeMap<String, u64>,
}

impl TelemetryRecord {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.plugin_id.is_empty() {
            return Err(ModelError::invalid("plugin_id", "must be non-empty"));
        }
        Ok(())
    }

    pub fn total_data_records(&self) -> u64 {
        self.data_record_count.values().sum()
    }
}
