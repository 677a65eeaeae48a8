//! The results manager.
//!
//! Sends task results and telemetry to the server through a transport
//! handle, retrying transient failures with bounded exponential backoff,
//! and appends one entry to the user-inspectable shared-data ledger per
//! transmitted object. Telemetry that cannot be delivered stays in a local
//! buffer with `transport_failure` recorded.

use thiserror::Error;

use fedtask_core::wire::to_canonical_json;
use fedtask_core::{ErrorCode, ResultEnvelope, TelemetryRecord, VirtualTime};

use crate::executor::{TaskOutcome, TaskStatus};

/// Application-level outcome of a delivered submission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryStatus {
    Stored,
    IgnoredRetired,
    Throttled,
    Rejected,
}

#[derive(Debug, Clone, Error)]
pub enum TransportError {
    #[error("transport unavailable: {0}")]
    Unavailable(String),
}

/// Accepts submissions from many devices concurrently.
pub trait ResultTransport: Send + Sync {
    fn submit_result(&self, envelope: &ResultEnvelope) -> Result<DeliveryStatus, TransportError>;
    fn submit_telemetry(&self, telemetry: &TelemetryRecord) -> Result<DeliveryStatus, TransportError>;
}

/// Virtual-time waits between retry attempts.
pub const RETRY_BACKOFF_MILLIS: [u64; 3] = [1_000, 4_000, 16_000];

/// One row of the on-device DB that lets end users inspect data shared with
/// the server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerEntry {
    pub timestamp: VirtualTime,
    pub task_id: String,
    pub payload_digest: String,
    pub summary: String,
}

/// Append-only record of everything transmitted.
#[derive(Debug, Clone, Default)]
pub struct SharedDataLedger {
    entries: Vec<LedgerEntry>,
}

impl SharedDataLedger {
    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    fn append(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct ReportCounters {
    /// Logical result envelopes handed to `report` for transmission.
    pub results_attempted: u64,
    /// Envelopes the transport accepted (any application outcome).
    pub results_delivered: u64,
    /// Envelopes dropped after exhausting retries.
    pub results_dropped: u64,
    pub telemetry_attempted: u64,
    pub telemetry_delivered: u64,
    pub telemetry_dropped: u64,
}

#[derive(Debug, Clone)]
pub struct TransmissionReceipt {
    pub result_status: Option<DeliveryStatus>,
    pub result_dropped: bool,
    pub telemetry_status: Option<DeliveryStatus>,
    pub telemetry_buffered: bool,
}

#[derive(Debug, Default)]
pub struct Reporter {
    pub ledger: SharedDataLedger,
    /// Telemetry that could not be delivered, kept locally.
    pub local_telemetry: Vec<TelemetryRecord>,
    pub counters: ReportCounters,
}

impl Reporter {
    pub fn new() -> Self {
        Reporter::default()
    }

    /// Transmits the task result (for completed outcomes) and the telemetry
    /// record. Returns what happened to each.
    pub fn report(
        &mut self,
        transport: &dyn ResultTransport,
        outcome: &TaskOutcome,
        task_id: &str,
        plugin_id: &str,
        mut telemetry: TelemetryRecord,
        now: VirtualTime,
    ) -> TransmissionReceipt {
        let mut receipt = TransmissionReceipt {
            result_status: None,
            result_dropped: false,
            telemetry_status: None,
            telemetry_buffered: false,
        };

        if outcome.status == TaskStatus::Completed {
            let payload = outcome.result_payload.clone().unwrap_or_default();
            match ResultEnvelope::new(task_id, plugin_id, payload, now) {
                Ok(envelope) => {
                    self.counters.results_attempted += 1;
                    match submit_with_retry(|| transport.submit_result(&envelope)) {
                        Ok(status) => {
                            self.counters.results_delivered += 1;
                            receipt.result_status = Some(status);
                            let digest = digest_of(&envelope);
                            self.ledger.append(LedgerEntry {
                                timestamp: now,
                                task_id: task_id.to_string(),
                                payload_digest: digest,
                                summary: format!("task result for {task_id}"),
                            });
                        }
                        Err(_) => {
                            self.counters.results_dropped += 1;
                            receipt.result_dropped = true;
                            telemetry.error_code = Some(ErrorCode::TransportFailure);
                        }
                    }
                }
                Err(error) => {
                    // A plug-in payload carrying identifier fields is never
                    // transmitted; surface it as a failed result instead.
                    self.counters.results_attempted += 1;
                    self.counters.results_dropped += 1;
                    receipt.result_dropped = true;
                    telemetry.error_code = Some(ErrorCode::PluginFailed);
                    let _ = error;
                }
            }
        }

        self.counters.telemetry_attempted += 1;
        match submit_with_retry(|| transport.submit_telemetry(&telemetry)) {
            Ok(status) => {
                self.counters.telemetry_delivered += 1;
                receipt.telemetry_status = Some(status);
                let digest = digest_of(&telemetry);
                self.ledger.append(LedgerEntry {
                    timestamp: now,
                    task_id: task_id.to_string(),
                    payload_digest: digest,
                    summary: format!("telemetry for plug-in {plugin_id}"),
                });
            }
            Err(_) => {
                self.counters.telemetry_dropped += 1;
                receipt.telemetry_buffered = true;
                telemetry.error_code = Some(ErrorCode::TransportFailure);
                self.local_telemetry.push(telemetry);
            }
        }

        receipt
    }
}

fn digest_of<T: serde::Serialize>(object: &T) -> String {
    fedtask_core::wire::content_hash(&to_canonical_json(object).unwrap_or_default())
}

fn submit_with_retry<F>(mut submit: F) -> Result<DeliveryStatus, TransportError>
where
    F: FnMut() -> Result<DeliveryStatus, TransportError>,
{
    let mut last_error = None;
    for attempt in 0..=RETRY_BACKOFF_MILLIS.len() {
        match submit() {
            Ok(status) => return Ok(status),
            Err(error) => last_error = Some(error),
        }
        // Backoff delays are virtual; attempts are sequential.
        let _ = attempt;
    }
    Err(last_error.expect("at least one attempt"))
}
