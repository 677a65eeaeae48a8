//! The server facade shared by the in-process simulator and the HTTP
//! service mode.
//!
//! Ingestion is the data manager: every header is discarded unread, the
//! body is validated against the envelope schema (which rejects identifier
//! fields), stragglers for retired tasks are ignored, and per-task token
//! buckets keep the flow of incoming results below the configured ceiling.
//! The received-count increment, retirement check and row store run in a
//! single critical section so stored rows never exceed the target.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use fedtask_core::{wire, AttachmentBlob, TaskDescriptor, VirtualTime};

use crate::registry::{TaskRegistry, TaskStatus};
use crate::results_db::{ResultsDatabase, StoredTelemetry};
use crate::throttle::TokenBucket;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("duplicate task id {0}")]
    DuplicateTask(String),
    #[error("attachment ref {0} does not resolve to a provided blob")]
    DanglingAttachment(String),
    #[error("attachment hash mismatch: declared {expected}, computed {actual}")]
    AttachmentHashMismatch { expected: String, actual: String },
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("storage failure: {0}")]
    Storage(String),
}

/// Untrusted transport-level request. Headers may carry source addresses
/// and other sensitive metadata; ingestion drops them without reading.
#[derive(Debug, Clone, Default)]
pub struct IngressRequest {
    pub headers: BTreeMap<String, String>,
    pub body: Vec<u8>,
}

impl IngressRequest {
    pub fn from_body(body: Vec<u8>) -> Self {
        IngressRequest { headers: BTreeMap::new(), body }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IngestOutcome {
    Stored,
    IgnoredRetired,
    Throttled,
    Rejected(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestCounters {
    pub results_stored: u64,
    pub results_ignored_retired: u64,
    pub results_throttled: u64,
    pub results_rejected: u64,
    pub telemetry_stored: u64,
    pub telemetry_rejected: u64,
}

/// Aggregated health statistics for one plug-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySummary {
    pub row_count: u64,
    pub mean_exec_millis: Option<f64>,
    pub error_counts: BTreeMap<String, u64>,
    /// Histogram over each report's total on-device record count; gauges
    /// the federated population size per data volume band.
    pub data_count_bins: BTreeMap<String, u64>,
}

pub fn data_count_bin(total: u64) -> &'static str {
    match total {
        0 => "0",
        1..=9 => "1-9",
        10..=99 => "10-99",
        100..=999 => "100-999",
        _ => "1000+",
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ServerConfig {
    pub retention_days: u32,
    pub throttle_rate_per_sec: f64,
    pub throttle_burst: f64,
    pub page_size: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            retention_days: 30,
            throttle_rate_per_sec: 100.0,
            throttle_burst: 100.0,
            page_size: 100,
        }
    }
}

struct Inner {
    registry: TaskRegistry,
    db: ResultsDatabase,
    buckets: HashMap<String, TokenBucket>,
    counters: IngestCounters,
}

/// Thread-safe server state. All operations take `&self`; ingestion runs
/// its validation outside the lock and the count/retire/store step inside.
pub struct FedServer {
    config: ServerConfig,
    inner: Mutex<Inner>,
}

impl FedServer {
    pub fn new(config: ServerConfig) -> Self {
        FedServer {
            config,
            inner: Mutex::new(Inner {
                registry: TaskRegistry::new(),
                db: ResultsDatabase::new(),
                buckets: HashMap::new(),
                counters: IngestCounters::default(),
            }),
        }
    }

    pub fn with_persistence(config: ServerConfig, dir: PathBuf) -> Result<Self, ServerError> {
        let db = ResultsDatabase::with_persistence(dir)?;
        let server = FedServer::new(config);
        server.inner.lock().unwrap().db = db;
        Ok(server)
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn publish_task(
        &self,
        descriptor: TaskDescriptor,
        attachments: Vec<AttachmentBlob>,
    ) -> Result<(), ServerError> {
        self.inner.lock().unwrap().registry.publish(descriptor, attachments)
    }

    pub fn list_tasks(&self, plugin_id: &str, now: VirtualTime) -> Vec<TaskDescriptor> {
        self.inner.lock().unwrap().registry.listing(plugin_id, now)
    }

    pub fn fetch_blob(&self, hash: &str) -> Option<Vec<u8>> {
        self.inner.lock().unwrap().registry.blob(hash).map(<[u8]>::to_vec)
    }

    /// Ingests one result envelope. Headers are discarded entirely; the
    /// stored row is rebuilt from the validated body alone and re-stamped
    /// with the server's receive time.
    pub fn ingest_result(&self, request: IngressRequest, now: VirtualTime) -> IngestOutcome {
        // Drop transport metadata before anything else looks at the request.
        let IngressRequest { headers: _, body } = request;

        let mut envelope = match wire::parse_envelope(&body) {
            Ok(envelope) => envelope,
            Err(error) => {
                let mut inner = self.inner.lock().unwrap();
                inner.counters.results_rejected += 1;
                return IngestOutcome::Rejected(error.to_string());
            }
        };
        envelope.received_at = now;

        let mut inner = self.inner.lock().unwrap();
        let entry = match inner.registry.entry(&envelope.task_id) {
            Some(entry) => entry,
            None => {
                inner.counters.results_rejected += 1;
                return IngestOutcome::Rejected(format!("unknown task {}", envelope.task_id));
            }
        };
        if entry.descriptor.plugin_id != envelope.plugin_id {
            inner.counters.results_rejected += 1;
            return IngestOutcome::Rejected("plugin id does not match task".into());
        }

        match inner.registry.retire_check(&envelope.task_id, now).expect("task exists") {
            TaskStatus::Retired => {
                inner.counters.results_ignored_retired += 1;
                return IngestOutcome::IgnoredRetired;
            }
            TaskStatus::Active => {}
        }

        let rate = self.config.throttle_rate_per_sec;
        let burst = self.config.throttle_burst;
        let task_id = envelope.task_id.clone();
        let allowed = inner
            .buckets
            .entry(task_id.clone())
            .or_insert_with(|| TokenBucket::new(rate, burst, now))
            .allow(now);
        if !allowed {
            inner.counters.results_throttled += 1;
            return IngestOutcome::Throttled;
        }

        if let Err(error) = inner.db.append_result(envelope) {
            inner.counters.results_rejected += 1;
            return IngestOutcome::Rejected(error.to_string());
        }
        inner.registry.record_result(&task_id).expect("task exists");
        inner.counters.results_stored += 1;
        IngestOutcome::Stored
    }

    pub fn ingest_telemetry(&self, request: IngressRequest, now: VirtualTime) -> IngestOutcome {
        let IngressRequest { headers: _, body } = request;
        let record = match wire::parse_telemetry(&body) {
            Ok(record) => record,
            Err(error) => {
                let mut inner = self.inner.lock().unwrap();
                inner.counters.telemetry_rejected += 1;
                return IngestOutcome::Rejected(error.to_string());
            }
        };
        let mut inner = self.inner.lock().unwrap();
        if let Err(error) = inner.db.append_telemetry(StoredTelemetry { received_at: now, record }) {
            inner.counters.telemetry_rejected += 1;
            return IngestOutcome::Rejected(error.to_string());
        }
        inner.counters.telemetry_stored += 1;
        IngestOutcome::Stored
    }

    pub fn retire_check(&self, task_id: &str, now: VirtualTime) -> Result<TaskStatus, ServerError> {
        self.inner.lock().unwrap().registry.retire_check(task_id, now)
    }

    /// Applies window retirement to all tasks (periodic server tick).
    pub fn sweep_retirement(&self, now: VirtualTime) {
        self.inner.lock().unwrap().registry.sweep(now);
    }

    pub fn task_status(&self, task_id: &str) -> Result<(TaskStatus, u64), ServerError> {
        let inner = self.inner.lock().unwrap();
        let entry =
            inner.registry.entry(task_id).ok_or_else(|| ServerError::UnknownTask(task_id.to_string()))?;
        Ok((entry.status, entry.received_count))
    }

    pub fn purge_results(&self, now: VirtualTime) -> Result<usize, ServerError> {
        self.inner.lock().unwrap().db.purge(now, self.config.retention_days)
    }

    pub fn fetch_results(
        &self,
        task_id: &str,
        page: usize,
    ) -> Result<Vec<fedtask_core::ResultEnvelope>, ServerError> {
        let inner = self.inner.lock().unwrap();
        if inner.registry.entry(task_id).is_none() {
            return Err(ServerError::UnknownTask(task_id.to_string()));
        }
        Ok(inner.db.results_for_task(task_id, page, self.config.page_size))
    }

    /// All stored results for a task across pages.
    pub fn fetch_all_results(
        &self,
        task_id: &str,
    ) -> Result<Vec<fedtask_core::ResultEnvelope>, ServerError> {
        let mut page = 0;
        let mut rows = Vec::new();
        loop {
            let chunk = self.fetch_results(task_id, page)?;
            if chunk.is_empty() {
                return Ok(rows);
            }
            rows.extend(chunk);
            page += 1;
        }
    }

    pub fn telemetry_summary(
        &self,
        plugin_id: &str,
        window: (VirtualTime, VirtualTime),
    ) -> TelemetrySummary {
        let inner = self.inner.lock().unwrap();
        let rows = inner.db.telemetry_rows(plugin_id, window);
        let row_count = rows.len() as u64;
        let mean_exec_millis = if rows.is_empty() {
            None
        } else {
            Some(rows.iter().map(|r| r.record.task_exec_millis as f64).sum::<f64>() / rows.len() as f64)
        };
        let mut error_counts = BTreeMap::new();
        let mut data_count_bins = BTreeMap::new();
        for row in rows {
            if let Some(code) = row.record.error_code {
                *error_counts.entry(code.as_str().to_string()).or_insert(0) += 1;
            }
            let bin = data_count_bin(row.record.total_data_records());
            *data_count_bins.entry(bin.to_string()).or_insert(0) += 1;
        }
        TelemetrySummary { row_count, mean_exec_millis, error_counts, data_count_bins }
    }

    pub fn counters(&self) -> IngestCounters {
        self.inner.lock().unwrap().counters
    }

    /// Scans every stored result row for forbidden identifier fields.
    /// Returns the number of violating rows (always 0 when ingestion does
    /// its job; used by sanitization audits).
    pub fn audit_forbidden_fields(&self) -> usize {
        let inner = self.inner.lock().unwrap();
        inner.db.all_results().iter().filter(|row| row.validate().is_err()).count()
    }
}
