//! The central results database.
//!
//! An embedded append-only log of sanitized result envelopes and telemetry
//! records, optionally persisted as newline-delimited JSON segments.
//! Purging removes rows older than the retention period and compacts the
//! on-disk segments.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use fedtask_core::time::MILLIS_PER_DAY;
use fedtask_core::{ResultEnvelope, TelemetryRecord, VirtualTime};

use crate::service::ServerError;

const ROWS_PER_SEGMENT: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTelemetry {
    pub received_at: VirtualTime,
    pub record: TelemetryRecord,
}

#[derive(Debug)]
struct PersistState {
    dir: PathBuf,
    result_rows_in_segment: usize,
    result_segment: u64,
    telemetry_rows_in_segment: usize,
    telemetry_segment: u64,
}

#[derive(Debug, Default)]
pub struct ResultsDatabase {
    results: Vec<ResultEnvelope>,
    telemetry: Vec<StoredTelemetry>,
    persist: Option<PersistState>,
}

impl ResultsDatabase {
    pub fn new() -> Self {
        ResultsDatabase::default()
    }

    /// Enables NDJSON segment persistence under `dir`.
    pub fn with_persistence(dir: PathBuf) -> Result<Self, ServerError> {
        fs::create_dir_all(&dir).map_err(|e| ServerError::Storage(e.to_string()))?;
        Ok(ResultsDatabase {
            results: Vec::new(),
            telemetry: Vec::new(),
            persist: Some(PersistState {
                dir,
                result_rows_in_segment: 0,
                result_segment: 0,
                telemetry_rows_in_segment: 0,
                telemetry_segment: 0,
            }),
        })
    }

    pub fn append_result(&mut self, envelope: ResultEnvelope) -> Result<(), ServerError> {
        if let Some(state) = &mut self.persist {
            append_line(state, Kind::Results, &envelope)?;
        }
        self.results.push(envelope);
        Ok(())
    }

    pub fn append_telemetry(&mut self, row: StoredTelemetry) -> Result<(), ServerError> {
        if let Some(state) = &mut self.persist {
            append_line(state, Kind::Telemetry, &row)?;
        }
        self.telemetry.push(row);
        Ok(())
    }

    /// Removes rows older than `retention_days` (strict cut: rows exactly at
    /// the boundary are retained) and compacts on-disk segments.
    pub fn purge(&mut self, now: VirtualTime, retention_days: u32) -> Result<usize, ServerError> {
        let cutoff = now.saturating_sub_millis(u64::from(retention_days) * MILLIS_PER_DAY);
        let before = self.results.len() + self.telemetry.len();
        self.results.retain(|row| row.received_at >= cutoff);
        self.telemetry.retain(|row| row.received_at >= cutoff);
        let removed = before - self.results.len() - self.telemetry.len();
        if removed > 0 {
            self.compact()?;
        }
        Ok(removed)
    }

    /// Stored envelopes for one task in stable ingestion order, paginated.
    pub fn results_for_task(&self, task_id: &str, page: usize, page_size: usize) -> Vec<ResultEnvelope> {
        self.results
            .iter()
            .filter(|row| row.task_id == task_id)
            .skip(page * page_size)
            .take(page_size)
            .cloned()
            .collect()
    }

    pub fn result_count_for_task(&self, task_id: &str) -> usize {
        self.results.iter().filter(|row| row.task_id == task_id).count()
    }

    pub fn all_results(&self) -> &[ResultEnvelope] {
        &self.results
    }

    pub fn telemetry_rows(&self, plugin_id: &str, window: (VirtualTime, VirtualTime)) -> Vec<&StoredTelemetry> {
        self.telemetry
            .iter()
            .filter(|row| {
                row.record.plugin_id == plugin_id
                    && row.received_at >= window.0
                    && row.received_at <= window.1
            })
            .collect()
    }

    pub fn row_counts(&self) -> (usize, usize) {
        (self.results.len(), self.telemetry.len())
    }

    /// Rewrites all segments from the surviving in-memory rows.
    fn compact(&mut self) -> Result<(), ServerError> {
        let Some(state) = &mut self.persist else {
            return Ok(());
        };
        for entry in fs::read_dir(&state.dir).map_err(|e| ServerError::Storage(e.to_string()))? {
            let entry = entry.map_err(|e| ServerError::Storage(e.to_string()))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with("results-") || name.starts_with("telemetry-") {
                fs::remove_file(entry.path()).map_err(|e| ServerError::Storage(e.to_string()))?;
            }
        }
        state.result_segment = 0;
        state.result_rows_in_segment = 0;
        state.telemetry_segment = 0;
        state.telemetry_rows_in_segment = 0;
        let results = self.results.clone();
        let telemetry = self.telemetry.clone();
        for row in &results {
            let state = self.persist.as_mut().expect("persistence enabled");
            append_line(state, Kind::Results, row)?;
        }
        for row in &telemetry {
            let state = self.persist.as_mut().expect("persistence enabled");
            append_line(state, Kind::Telemetry, row)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Results,
    Telemetry,
}

fn append_line<T: Serialize>(state: &mut PersistState, kind: Kind, row: &T) -> Result<(), ServerError> {
    let (prefix, segment, rows) = match kind {
        Kind::Results => ("results", &mut state.result_segment, &mut state.result_rows_in_segment),
        Kind::Telemetry => {
            ("telemetry", &mut state.telemetry_segment, &mut state.telemetry_rows_in_segment)
        }
    };
    if *rows >= ROWS_PER_SEGMENT {
        *segment += 1;
        *rows = 0;
    }
    let path = state.dir.join(format!("{prefix}-{segment:05}.ndjson"));
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| ServerError::Storage(e.to_string()))?;
    let line = serde_json::to_vec(row).map_err(|e| ServerError::Storage(e.to_string()))?;
    file.write_all(&line).map_err(|e| ServerError::Storage(e.to_string()))?;
    file.write_all(b"\n").map_err(|e| ServerError::Storage(e.to_string()))?;
    *rows += 1;
    Ok(())
}
