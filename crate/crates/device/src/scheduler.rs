//! The on-device task scheduler.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use fedtask_core::{matches, DeviceProfile, ModelError, TaskDescriptor, VirtualTime};

/// Runs one scheduling cycle and returns at most one selected task per
/// registered plug-in.
///
/// If the system-level participation gates are not met the cycle is skipped
/// entirely. Otherwise plug-ins are visited in a uniformly random order and
/// each plug-in's descriptors are shuffled; every descriptor that is inside
/// its active window and passes precondition matching is accepted with
/// probability `sampling_rate`, and the first accepted descriptor wins.
pub fn schedule_cycle<R: Rng + ?Sized>(
    profile: &DeviceProfile,
    descriptors_by_plugin: &BTreeMap<String, Vec<TaskDescriptor>>,
    store_keys: &BTreeSet<String>,
    now: VirtualTime,
    rng: &mut R,
) -> Result<Vec<(String, TaskDescriptor)>, ModelError> {
    if !profile.participates() {
        return Ok(Vec::new());
    }

    let mut plugin_order: Vec<&String> = profile
        .registered_plugins
        .iter()
        .filter(|plugin_id| descriptors_by_plugin.contains_key(*plugin_id))
        .collect();
    plugin_order.shuffle(rng);

    let mut selections = Vec::new();
    for plugin_id in plugin_order {
        let mut candidates: Vec<&TaskDescriptor> = descriptors_by_plugin[plugin_id].iter().collect();
        candidates.shuffle(rng);
        for descriptor in candidates {
            if !descriptor.is_active(now) {
                continue;
            }
            if !matches(&descriptor.preconditions, profile, store_keys)? {
                continue;
            }
            if rng.random_bool(descriptor.sampling_rate) {
                selections.push((plugin_id.clone(), descriptor.clone()));
                break;
            }
        }
    }
    Ok(selections)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fedtask_core::task::{ActiveWindow, Precondition};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn profile(plugins: &[&str]) -> DeviceProfile {
        DeviceProfile {
            device_id: "d".into(),
            os_version: 15,
            device_type: "phone".into(),
            opted_in: true,
            power_connected: true,
            idle: true,
            unmetered_network: true,
            registered_plugins: plugins.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn descriptor(task_id: &str, plugin_id: &str, rate: f64) -> TaskDescriptor {
        TaskDescriptor {
            task_id: task_id.into(),
            plugin_id: plugin_id.into(),
            sampling_rate: rate,
            preconditions: vec![],
            attachment_refs: vec![],
            target_result_count: 100,
            active_window: ActiveWindow::new(VirtualTime::ZERO, VirtualTime::from_days(7)),
            payload_schema_version: 1,
        }
    }

    fn by_plugin(descriptors: &[TaskDescriptor]) -> BTreeMap<String, Vec<TaskDescriptor>> {
        let mut map: BTreeMap<String, Vec<TaskDescriptor>> = BTreeMap::new();
        for d in descriptors {
            map.entry(d.plugin_id.clone()).or_default().push(d.clone());
        }
        map
    }

    #[test]
    fn certain_selection_at_rate_one() {
        let descriptors = by_plugin(&[descriptor("t", "p", 1.0)]);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let selections = schedule_cycle(
            &profile(&["p"]),
            &descriptors,
            &BTreeSet::new(),
            VirtualTime::from_hours(1),
            &mut rng,
        )
        .unwrap();
        assert_eq!(selections.len(), 1);
        assert_eq!(selections[0].1.task_id, "t");
    }

    #[test]
    fn rate_zero_never_selected() {
        let descriptors = by_plugin(&[descriptor("t", "p", 0.0)]);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..200 {
            let selections = schedule_cycle(
                &profile(&["p"]),
                &descriptors,
                &BTreeSet::new(),
                VirtualTime::from_hours(1),
                &mut rng,
            )
            .unwrap();
            assert!(selections.is_empty());
        }
    }

    #[test]
    fn non_participating_device_skips_cycle() {
        let descriptors = by_plugin(&[descriptor("t", "p", 1.0)]);
        let mut p = profile(&["p"]);
        p.idle = false;
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let selections =
            schedule_cycle(&p, &descriptors, &BTreeSet::new(), VirtualTime::from_hours(1), &mut rng)
                .unwrap();
        assert!(selections.is_empty());
    }

    #[test]
    fn at_most_one_selection_per_plugin() {
        let descriptors = by_plugin(&[
            descriptor("t1", "p", 1.0),
            descriptor("t2", "p", 1.0),
            descriptor("t3", "q", 1.0),
        ]);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..100 {
            let selections = schedule_cycle(
                &profile(&["p", "q"]),
                &descriptors,
                &BTreeSet::new(),
                VirtualTime::from_hours(1),
                &mut rng,
            )
            .unwrap();
            let p_count = selections.iter().filter(|(id, _)| id == "p").count();
            let q_count = selections.iter().filter(|(id, _)| id == "q").count();
            assert_eq!(p_count, 1);
            assert_eq!(q_count, 1);
        }
    }

    #[test]
    fn inactive_window_excluded() {
        let mut d = descriptor("t", "p", 1.0);
        d.active_window = ActiveWindow::new(VirtualTime::from_days(2), VirtualTime::from_days(3));
        let descriptors = by_plugin(&[d]);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let selections = schedule_cycle(
            &profile(&["p"]),
            &descriptors,
            &BTreeSet::new(),
            VirtualTime::from_hours(1),
            &mut rng,
        )
        .unwrap();
        assert!(selections.is_empty());
    }

    #[test]
    fn failed_precondition_excluded() {
        let mut d = descriptor("t", "p", 1.0);
        d.preconditions = vec![Precondition::data_key_present("speech")];
        let descriptors = by_plugin(&[d]);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let selections = schedule_cycle(
            &profile(&["p"]),
            &descriptors,
            &BTreeSet::new(),
            VirtualTime::from_hours(1),
            &mut rng,
        )
        .unwrap();
        assert!(selections.is_empty());

        let keys: BTreeSet<String> = ["speech".to_string()].into();
        let descriptors = by_plugin(&[{
            let mut d = descriptor("t", "p", 1.0);
            d.preconditions = vec![Precondition::data_key_present("speech")];
            d
        }]);
        let selections =
            schedule_cycle(&profile(&["p"]), &descriptors, &keys, VirtualTime::from_hours(1), &mut rng)
                .unwrap();
        assert_eq!(selections.len(), 1);
    }

    #[test]
    fn unregistered_plugin_ignored() {
        let descriptors = by_plugin(&[descriptor("t", "other", 1.0)]);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let selections = schedule_cycle(
            &profile(&["p"]),
            &descriptors,
            &BTreeSet::new(),
            VirtualTime::from_hours(1),
            &mut rng,
        )
        .unwrap();
        assert!(selections.is_empty());
    }
}
