//! On-device interaction records and retention policies.

use serde::{Deserialize, Serialize};

use crate::envelope::Payload;
use crate::error::ModelError;
use crate::time::VirtualTime;

/// A single logged user interaction, keyed by its data-source label
/// (e.g. interaction category).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRecord {
    pub key: String,
    pub payload: Payload,
    pub created_at: VirtualTime,
}

impl DataRecord {
    pub fn new(key: impl Into<String>, payload: Payload, created_at: VirtualTime) -> Self {
        DataRecord { key: key.into(), payload, created_at }
    }
}

/// Per-key data limits: interaction sub-sampling, maximum record age in
/// days and a record cap under which the oldest record is overwritten.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetentionPolicy {
    pub subsample_rate: f64,
    pub max_age_days: u32,
    pub max_records: usize,
}

impl RetentionPolicy {
    pub fn new(subsample_rate: f64, max_age_days: u32, max_records: usize) -> Self {
        RetentionPolicy { subsample_rate, max_age_days, max_records }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.subsample_rate) || !self.subsample_rate.is_finite() {
            return Err(ModelError::invalid("subsample_rate", "must lie in [0, 1]"));
        }
        if self.max_age_days == 0 {
            return Err(ModelError::invalid("max_age_days", "must be >= 1"));
        }
        if self.max_records == 0 {
            return Err(ModelError::invalid("max_records", "must be >= 1"));
        }
        Ok(())
    }
}

/// Conservative fallback applied to keys without an explicit policy.
impl Default for RetentionPolicy {
    fn default() -> Self {
        RetentionPolicy { subsample_rate: 1.0, max_age_days: 30, max_records: 1000 }
    }
}
