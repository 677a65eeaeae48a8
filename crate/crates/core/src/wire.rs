//! Canonical JSON wire format and content addressing.
//!
//! Struct fields serialize in declaration order and payload maps keep their
//! keys sorted, so equal objects produce identical bytes. Unknown fields are
//! rejected for [`ResultEnvelope`] (enforcing the no-identifier invariant)
//! and tolerated-and-dropped everywhere else.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::envelope::{ResultEnvelope, TelemetryRecord};
use crate::error::WireError;
use crate::task::TaskDescriptor;

/// Serializes any wire object to canonical JSON bytes.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<Vec<u8>, WireError> {
    Ok(serde_json::to_vec(value)?)
}

pub fn parse_descriptor(bytes: &[u8]) -> Result<TaskDescriptor, WireError> {
    let descriptor: TaskDescriptor = serde_json::from_slice(bytes)?;
    descriptor.validate()?;
    Ok(descriptor)
}

pub fn parse_envelope(bytes: &[u8]) -> Result<ResultEnvelope, WireError> {
    let envelope: ResultEnvelope = serde_json::from_slice(bytes)?;
    envelope.validate()?;
    Ok(envelope)
}

pub fn parse_telemetry(bytes: &[u8]) -> Result<TelemetryRecord, WireError> {
    let telemetry: TelemetryRecord = serde_json::from_slice(bytes)?;
    telemetry.validate()?;
    Ok(telemetry)
}

/// Content address of a blob: lowercase hex SHA-256.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
