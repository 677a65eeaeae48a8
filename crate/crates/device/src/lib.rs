//! On-device runtime for federated task execution.
//!
//! Mirrors the on-device half of the framework: a data store with
//! configurable retention, a task scheduler that samples at most one
//! matching task per plug-in per cycle, a plug-in executor with
//! abort/deadline monitoring, and a results manager that transmits
//! sanitized results and keeps a user-inspectable ledger of shared data.
//!
//! One device instance is a sequential actor; many instances may run
//! concurrently sharing only the transport handle.

pub mod executor;
pub mod reporter;
pub mod scheduler;
pub mod store;

pub use executor::{
    execute_task, AvailabilityOracle, ExecutionContext, PluginError, TaskAbort, TaskMaterials,
    TaskOutcome, TaskPlugin, TaskStatus,
};
pub use reporter::{
    DeliveryStatus, LedgerEntry, ReportCounters, Reporter, ResultTransport, SharedDataLedger,
    TransmissionReceipt, TransportError,
};
pub use scheduler::schedule_cycle;
pub use store::{DataStore, StoreView, WriteOutcome};
