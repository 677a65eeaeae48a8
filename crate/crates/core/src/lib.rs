//! Shared domain model for the federated task framework.
//!
//! This crate defines the types exchanged between devices and the server
//! (task descriptors, result envelopes, telemetry), the precondition
//! matching predicate used by the on-device scheduler, and the canonical
//! JSON wire format. All types are immutable value objects after
//! construction and safe to share across concurrent executors.

pub mod data;
pub mod envelope;
pub mod error;
pub mod fleet;
pub mod matching;
pub mod profile;
pub mod seed;
pub mod task;
pub mod time;
pub mod wire;

pub use data::{DataRecord, RetentionPolicy};
pub use envelope::{ErrorCode, Payload, ResultEnvelope, TelemetryRecord, FORBIDDEN_IDENTIFIER_FIELDS};
pub use error::{ModelError, WireError};
pub use fleet::{AttachmentBlob, FleetError, FleetHandle, TaskRunReport};
pub use matching::matches;
pub use profile::DeviceProfile;
pub use task::{ActiveWindow, Precondition, PreconditionKind, PredicateOp, ScalarValue, TaskDescriptor};
pub use time::VirtualTime;
