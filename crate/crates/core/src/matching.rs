//! On-device precondition matching.

use std::collections::BTreeSet;

use crate::error::ModelError;
use crate::profile::DeviceProfile;
use crate::task::{Precondition, PreconditionKind, PredicateOp, ScalarValue};

/// Returns true iff every precondition holds for the given device.
///
/// Device-attribute preconditions are evaluated against the profile; an
/// unknown attribute name excludes the device rather than erroring. Data-key
/// preconditions hold iff the key exists in the store. Malformed
/// predicate/value pairings are a validation error.
///
/// Pure: same inputs, same output.
pub fn matches(
    preconditions: &[Precondition],
    profile: &DeviceProfile,
    store_keys: &BTreeSet<String>,
) -> Result<bool, ModelError> {
    for precondition in preconditions {
        precondition.validate()?;
        if !evaluate(precondition, profile, store_keys) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn evaluate(precondition: &Precondition, profile: &DeviceProfile, store_keys: &BTreeSet<String>) -> bool {
    match precondition.kind {
        PreconditionKind::DataKey => store_keys.contains(&precondition.attribute_name),
        PreconditionKind::DeviceAttribute => {
            let Some(actual) = profile.attribute(&precondition.attribute_name) else {
                return false;
            };
            match precondition.predicate {
                PredicateOp::Present => true,
                PredicateOp::Equals => Some(&actual) == precondition.value.as_ref(),
                PredicateOp::Gte | PredicateOp::Lte => {
                    // Validation guarantees an integer expectation; a
                    // non-integer attribute simply fails the gate.
                    let (ScalarValue::Int(have), Some(ScalarValue::Int(want))) =
                        (actual, precondition.value.as_ref())
                    else {
                        return false;
                    };
                    match precondition.predicate {
                        PredicateOp::Gte => have >= *want,
                        _ => have <= *want,
                    }
                }
            }
        }
    }
}
