//! Device attributes visible to the scheduler.

use serde::{Deserialize, Serialize};

use crate::task::ScalarValue;

/// Simulation-side description of a device. The `device_id` exists only so
/// the simulator can address devices; it is never serialized into results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub device_id: String,
    pub os_version: i64,
    pub device_type: String,
    /// Whether the user is opted into the data collection program.
    pub opted_in: bool,
    pub power_connected: bool,
    pub idle: bool,
    pub unmetered_network: bool,
    pub registered_plugins: Vec<String>,
}

impl DeviceProfile {
    /// System-level participation gate: opted in, plugged into power, idle
    /// and on an unmetered network.
    pub fn participates(&self) -> bool {
        self.opted_in && self.power_connected && self.idle && self.unmetered_network
    }

    /// Looks up a device-global attribute by name. Unknown names yield
    /// `None`, which the matcher treats as a failed precondition.
    pub fn attribute(&self, name: &str) -> Option<ScalarValue> {
        match name {
            "os_version" => Some(ScalarValue::Int(self.os_version)),
            "device_type" => Some(ScalarValue::Str(self.device_type.clone())),
            "opted_in" => Some(ScalarValue::Bool(self.opted_in)),
            "power_connected" => Some(ScalarValue::Bool(self.power_connected)),
            "idle" => Some(ScalarValue::Bool(self.idle)),
            "unmetered_network" => Some(ScalarValue::Bool(self.unmetered_network)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn profile() -> DeviceProfile {
        DeviceProfile {
            device_id: "dev-0".into(),
            os_version: 14,
            device_type: "phone".into(),
            opted_in: true,
            power_connected: true,
            idle: true,
            unmetered_network: true,
            registered_plugins: vec!["echo".into()],
        }
    }

    #[test]
    fn participation_requires_all_gates() {
        let mut p = profile();
        assert!(p.participates());
        p.power_connected = false;
        assert!(!p.participates());
        p.power_connected = true;
        p.opted_in = false;
        assert!(!p.participates());
    }

    #[test]
    fn attribute_lookup() {
        let p = profile();
        assert_eq!(p.attribute("os_version"), Some(ScalarValue::Int(14)));
        assert_eq!(p.attribute("device_type"), Some(ScalarValue::Str("phone".into())));
        assert_eq!(p.attribute("no_such_attribute"), None);
    }
}
