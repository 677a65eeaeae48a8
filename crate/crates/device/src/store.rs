//! The on-device data store.
//!
//! Applications log interaction records here under per-key retention
//! policies: sub-sampling on write, automatic deletion after `max_age_days`,
//! and a per-key record cap under which the oldest record is overwritten.
//! Writes are denied while the device is opted out, and opting out purges
//! everything. Encryption-at-rest until first unlock is modeled as a boolean
//! gate on reads.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use fedtask_core::time::MILLIS_PER_DAY;
use fedtask_core::wire::content_hash;
use fedtask_core::{DataRecord, ModelError, RetentionPolicy, VirtualTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteOutcome {
    Stored,
    SubsampledOut,
    DeniedOptOut,
}

#[derive(Debug, thiserror::Error)]
#[error("data store is locked until first unlock")]
pub struct StoreLocked;

#[derive(Debug, Clone)]
pub struct DataStore {
    records: Vec<DataRecord>,
    policies: BTreeMap<String, RetentionPolicy>,
    default_policy: RetentionPolicy,
    opted_in: bool,
    unlocked: bool,
}

impl DataStore {
    pub fn new(opted_in: bool) -> Self {
        DataStore {
            records: Vec::new(),
            policies: BTreeMap::new(),
            default_policy: RetentionPolicy::default(),
            opted_in,
            unlocked: true,
        }
    }

    pub fn set_policy(&mut self, key: impl Into<String>, policy: RetentionPolicy) -> Result<(), ModelError> {
        policy.validate()?;
        self.policies.insert(key.into(), policy);
        Ok(())
    }

    pub fn set_default_policy(&mut self, policy: RetentionPolicy) -> Result<(), ModelError> {
        policy.validate()?;
        self.default_policy = policy;
        Ok(())
    }

    pub fn policy_for(&self, key: &str) -> &RetentionPolicy {
        self.policies.get(key).unwrap_or(&self.default_policy)
    }

    pub fn opted_in(&self) -> bool {
        self.opted_in
    }

    /// Models first-unlock gating of the encrypted store.
    pub fn set_unlocked(&mut self, unlocked: bool) {
        self.unlocked = unlocked;
    }

    pub fn unlocked(&self) -> bool {
        self.unlocked
    }

    /// Writes one record. Denied when opted out; otherwise stored with
    /// probability `subsample_rate`, evicting the oldest record of the same
    /// key once the cap is reached.
    pub fn write<R: Rng + ?Sized>(&mut self, record: DataRecord, rng: &mut R) -> WriteOutcome {
        if !self.opted_in {
            return WriteOutcome::DeniedOptOut;
        }
        let policy = *self.policy_for(&record.key);
        if !rng.random_bool(policy.subsample_rate) {
            return WriteOutcome::SubsampledOut;
        }
        while self.count_for_key(&record.key) >= policy.max_records {
            if let Some(oldest) = self.records.iter().position(|r| r.key == record.key) {
                self.records.remove(oldest);
            } else {
                break;
            }
        }
        self.records.push(record);
        WriteOutcome::Stored
    }

    /// Removes records older than their key's `max_age_days`. Records aged
    /// exactly the limit are retained (strict cut). Returns the count removed.
    pub fn purge_expired(&mut self, now: VirtualTime) -> usize {
        let policies = self.policies.clone();
        let default_policy = self.default_policy;
        let before = self.records.len();
        self.records.retain(|record| {
            let policy = policies.get(&record.key).unwrap_or(&default_policy);
            let cutoff = now.saturating_sub_millis(u64::from(policy.max_age_days) * MILLIS_PER_DAY);
            record.created_at >= cutoff
        });
        before - self.records.len()
    }

    /// Opt-out transition: empties the store and denies subsequent writes.
    pub fn purge_on_opt_out(&mut self) -> usize {
        self.opted_in = false;
        let removed = self.records.len();
        self.records.clear();
        removed
    }

    pub fn set_opted_in(&mut self, opted_in: bool) {
        if !opted_in && self.opted_in {
            self.purge_on_opt_out();
        } else {
            self.opted_in = opted_in;
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count_for_key(&self, key: &str) -> usize {
        self.records.iter().filter(|r| r.key == key).count()
    }

    pub fn keys(&self) -> BTreeSet<String> {
        self.records.iter().map(|r| r.key.clone()).collect()
    }

    pub fn counts_by_key(&self) -> BTreeMap<String, u64> {
        let mut counts = BTreeMap::new();
        for record in &self.records {
            *counts.entry(record.key.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// Read-only view handed to plug-ins during task execution. Fails while
    /// the store is locked (pre first-unlock).
    pub fn view(&self) -> Result<StoreView<'_>, StoreLocked> {
        if !self.unlocked {
            return Err(StoreLocked);
        }
        Ok(StoreView { records: &self.records })
    }

    /// Digest over all record bytes, used to assert plug-ins cannot mutate
    /// the store.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(&self.records).expect("records serialize");
        content_hash(&bytes)
    }
}

/// Immutable view of the store contents.
#[derive(Debug, Clone, Copy)]
pub struct StoreView<'a> {
    records: &'a [DataRecord],
}

impl<'a> StoreView<'a> {
    pub fn records(&self) -> &'a [DataRecord] {
        self.records
    }

    pub fn records_for_key<'k>(&self, key: &'k str) -> impl Iterator<Item = &'a DataRecord> + use<'a, 'k> {
        self.records.iter().filter(move |r| r.key == key)
    }

    pub fn keys(&self) -> BTreeSet<String> {
        self.records.iter().map(|r| r.key.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fedtask_core::envelope::Payload;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn record(key: &str, at: u64) -> DataRecord {
        DataRecord::new(key, Payload::new(), VirtualTime::from_millis(at))
    }

    fn rng() -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(7)
    }

    #[test]
    fn opted_out_write_denied() {
        let mut store = DataStore::new(false);
        let outcome = store.write(record("k", 0), &mut rng());
        assert_eq!(outcome, WriteOutcome::DeniedOptOut);
        assert!(store.is_empty());
    }

    #[test]
    fn zero_subsample_rate_drops_everything() {
        let mut store = DataStore::new(true);
        store.set_policy("k", RetentionPolicy::new(0.0, 30, 10)).unwrap();
        let mut r = rng();
        for i in 0..50 {
            assert_eq!(store.write(record("k", i), &mut r), WriteOutcome::SubsampledOut);
        }
        assert!(store.is_empty());
    }

    #[test]
    fn cap_evicts_oldest_of_same_key() {
        let mut store = DataStore::new(true);
        store.set_policy("k", RetentionPolicy::new(1.0, 30, 3)).unwrap();
        let mut r = rng();
        for i in 0..4 {
            assert_eq!(store.write(record("k", i), &mut r), WriteOutcome::Stored);
        }
        assert_eq!(store.count_for_key("k"), 3);
        let times: Vec<u64> =
            store.view().unwrap().records_for_key("k").map(|rec| rec.created_at.millis()).collect();
        assert_eq!(times, vec![1, 2, 3]);
    }

    #[test]
    fn cap_is_per_key() {
        let mut store = DataStore::new(true);
        store.set_policy("a", RetentionPolicy::new(1.0, 30, 1)).unwrap();
        let mut r = rng();
        store.write(record("a", 0), &mut r);
        store.write(record("b", 1), &mut r);
        store.write(record("a", 2), &mut r);
        assert_eq!(store.count_for_key("a"), 1);
        assert_eq!(store.count_for_key("b"), 1);
    }

    #[test]
    fn purge_expired_threshold() {
        let mut store = DataStore::new(true);
        store.set_policy("k", RetentionPolicy::new(1.0, 10, 100)).unwrap();
        let mut r = rng();
        let now = VirtualTime::from_days(30);
        // 5 records aged 11 days, 2 aged 9 days.
        for i in 0..5 {
            store.write(record("k", VirtualTime::from_days(19).millis() + i), &mut r);
        }
        store.write(record("k", VirtualTime::from_days(21).millis()), &mut r);
        store.write(record("k", VirtualTime::from_days(21).millis() + 1), &mut r);
        assert_eq!(store.purge_expired(now), 5);
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn record_aged_exactly_max_age_retained() {
        let mut store = DataStore::new(true);
        store.set_policy("k", RetentionPolicy::new(1.0, 10, 100)).unwrap();
        store.write(record("k", VirtualTime::from_days(20).millis()), &mut rng());
        assert_eq!(store.purge_expired(VirtualTime::from_days(30)), 0);
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn empty_store_purges_nothing() {
        let mut store = DataStore::new(true);
        assert_eq!(store.purge_expired(VirtualTime::from_days(100)), 0);
    }

    #[test]
    fn opt_out_purges_and_denies() {
        let mut store = DataStore::new(true);
        let mut r = rng();
        for i in 0..100 {
            store.write(record("k", i), &mut r);
        }
        assert_eq!(store.purge_on_opt_out(), 100);
        assert!(store.is_empty());
        assert_eq!(store.purge_on_opt_out(), 0);
        assert_eq!(store.write(record("k", 0), &mut r), WriteOutcome::DeniedOptOut);
    }

    #[test]
    fn unknown_key_uses_default_policy() {
        let store = DataStore::new(true);
        assert_eq!(store.policy_for("unseen"), &RetentionPolicy::default());
    }

    #[test]
    fn locked_store_refuses_views() {
        let mut store = DataStore::new(true);
        store.set_unlocked(false);
        assert!(store.view().is_err());
        store.set_unlocked(true);
        assert!(store.view().is_ok());
    }
}
