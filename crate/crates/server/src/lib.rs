//! Server components: task manager, data manager, results database and the
//! developer-facing service surface.
//!
//! The [`FedServer`] facade bundles task publication and retirement, result
//! ingestion with sanitization and throttling, the append-only results
//! database and telemetry summaries. The same operations back both the
//! in-process simulator bus and the optional HTTP service mode.

pub mod http;
pub mod registry;
pub mod results_db;
pub mod service;
pub mod throttle;

pub use registry::{TaskRegistry, TaskStatus};
pub use results_db::{ResultsDatabase, StoredTelemetry};
pub use service::{
    FedServer, IngestCounters, IngestOutcome, IngressRequest, ServerConfig, ServerError,
    TelemetrySummary,
};
pub use throttle::TokenBucket;
