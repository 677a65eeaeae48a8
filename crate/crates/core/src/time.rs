//! Virtual timestamps.
//!
//! The whole framework runs on virtual time so that simulations are
//! deterministic and fast. A [`VirtualTime`] is a number of milliseconds
//! since an arbitrary epoch (simulation start, or the Unix epoch when the
//! server runs as a real HTTP service).

use serde::{Deserialize, Serialize};

pub const MILLIS_PER_SECOND: u64 = 1_000;
pub const MILLIS_PER_MINUTE: u64 = 60 * MILLIS_PER_SECOND;
pub const MILLIS_PER_HOUR: u64 = 60 * MILLIS_PER_MINUTE;
pub const MILLIS_PER_DAY: u64 = 24 * MILLIS_PER_HOUR;

/// A point in virtual time, in milliseconds since the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct VirtualTime(pub u64);

impl VirtualTime {
    pub const ZERO: VirtualTime = VirtualTime(0);

    pub fn from_millis(millis: u64) -> Self {
        VirtualTime(millis)
    }

    pub fn from_hours(hours: u64) -> Self {
        VirtualTime(hours * MILLIS_PER_HOUR)
    }

    pub fn from_days(days: u64) -> Self {
        VirtualTime(days * MILLIS_PER_DAY)
    }

    pub fn millis(self) -> u64 {
        self.0
    }

    pub fn plus_millis(self, millis: u64) -> Self {
        VirtualTime(self.0 + millis)
    }

    pub fn plus_hours(self, hours: u64) -> Self {
        VirtualTime(self.0 + hours * MILLIS_PER_HOUR)
    }

    pub fn plus_days(self, days: u64) -> Self {
        VirtualTime(self.0 + days * MILLIS_PER_DAY)
    }

    pub fn saturating_sub_millis(self, millis: u64) -> Self {
        VirtualTime(self.0.saturating_sub(millis))
    }

    pub fn saturating_sub_days(self, days: u64) -> Self {
        self.saturating_sub_millis(days * MILLIS_PER_DAY)
    }
}

impl std::fmt::Display for VirtualTime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        let t = VirtualTime::from_days(2).plus_hours(3);
        assert_eq!(t.millis(), 2 * MILLIS_PER_DAY + 3 * MILLIS_PER_HOUR);
        assert_eq!(t.saturating_sub_days(5), VirtualTime::ZERO);
    }

    #[test]
    fn ordering() {
        assert!(VirtualTime::from_hours(1) < VirtualTime::from_hours(2));
    }
}
