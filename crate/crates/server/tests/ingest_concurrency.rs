//! Concurrency and adversarial-input tests for result ingestion.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use fedtask_core::envelope::Payload;
use fedtask_core::task::ActiveWindow;
use fedtask_core::{wire, ResultEnvelope, TaskDescriptor, VirtualTime};
use fedtask_server::{FedServer, IngestOutcome, IngressRequest, ServerConfig};

fn descriptor(task_id: &str, target: u64) -> TaskDescriptor {
    TaskDescriptor {
        task_id: task_id.into(),
        plugin_id: "p".into(),
        sampling_rate: 1.0,
        preconditions: vec![],
        attachment_refs: vec![],
        target_result_count: target,
        active_window: ActiveWindow::new(VirtualTime::ZERO, VirtualTime::from_days(1)),
        payload_schema_version: 1,
    }
}

fn result_body(task_id: &str) -> Vec<u8> {
    let envelope = ResultEnvelope::new(task_id, "p", Payload::new(), VirtualTime::ZERO).unwrap();
    wire::to_canonical_json(&envelope).unwrap()
}

/// With the atomic check-and-store critical section, concurrent ingestion
/// never stores more rows than the retirement target.
#[test]
fn concurrent_ingest_never_overshoots_target() {
    let target = 50u64;
    let server = Arc::new(FedServer::new(ServerConfig {
        throttle_rate_per_sec: 1e9,
        throttle_burst: 1e9,
        ..ServerConfig::default()
    }));
    server.publish_task(descriptor("t", target), vec![]).unwrap();

    let mut handles = Vec::new();
    for _ in 0..8 {
        let server = Arc::clone(&server);
        handles.push(thread::spawn(move || {
            let mut stored = 0u64;
            for _ in 0..40 {
                let outcome = server
                    .ingest_result(IngressRequest::from_body(result_body("t")), VirtualTime::ZERO);
                if outcome == IngestOutcome::Stored {
                    stored += 1;
                }
            }
            stored
        }));
    }
    let total_stored: u64 = handles.into_iter().map(|h| h.join().unwrap()).sum();
    assert_eq!(total_stored, target);
    assert_eq!(server.fetch_all_results("t").unwrap().len() as u64, target);
    let (status, count) = server.task_status("t").unwrap();
    assert_eq!(status, fedtask_server::TaskStatus::Retired);
    assert_eq!(count, target);
}

/// Once retired, stored rows and received counts are frozen under further
/// random ingest traffic.
#[test]
fn straggler_monotonicity() {
    let server = FedServer::new(ServerConfig::default());
    server.publish_task(descriptor("t", 3), vec![]).unwrap();
    for _ in 0..3 {
        server.ingest_result(IngressRequest::from_body(result_body("t")), VirtualTime::ZERO);
    }
    let (status, count_at_retirement) = server.task_status("t").unwrap();
    assert_eq!(status, fedtask_server::TaskStatus::Retired);
    for i in 0..100u64 {
        let outcome = server
            .ingest_result(IngressRequest::from_body(result_body("t")), VirtualTime::from_millis(i));
        assert_eq!(outcome, IngestOutcome::IgnoredRetired);
    }
    let (_, count) = server.task_status("t").unwrap();
    assert_eq!(count, count_at_retirement);
    assert_eq!(server.fetch_all_results("t").unwrap().len(), 3);
}

/// Fuzz ingestion with adversarial headers and bodies: no stored row ever
/// contains a forbidden identifier field and retired tasks gain no rows.
#[test]
fn adversarial_ingress_never_stores_identifiers() {
    let server = FedServer::new(ServerConfig {
        throttle_rate_per_sec: 1e9,
        throttle_burst: 1e9,
        ..ServerConfig::default()
    });
    server.publish_task(descriptor("open", 1_000_000), vec![]).unwrap();
    server.publish_task(descriptor("closed", 1), vec![]).unwrap();
    // Retire "closed" immediately.
    server.ingest_result(IngressRequest::from_body(result_body("closed")), VirtualTime::ZERO);

    let mut rng = ChaCha12Rng::seed_from_u64(99);
    let forbidden = ["device_id", "user_id", "ip_address"];
    for i in 0..10_000u64 {
        let task_id = if rng.random_bool(0.3) { "closed" } else { "open" };
        let body = match rng.random_range(0..5) {
            // Clean envelope.
            0 => result_body(task_id),
            // Top-level forbidden field.
            1 => format!(
                r#"{{"task_id":"{task_id}","plugin_id":"p","payload":{{}},"received_at":0,"{}":"x{i}"}}"#,
                forbidden[rng.random_range(0..3)]
            )
            .into_bytes(),
            // Forbidden field nested in the payload.
            2 => format!(
                r#"{{"task_id":"{task_id}","plugin_id":"p","payload":{{"a":{{"{}":"x{i}"}}}},"received_at":0}}"#,
                forbidden[rng.random_range(0..3)]
            )
            .into_bytes(),
            // Garbage.
            3 => format!("not json at all {i}").into_bytes(),
            // Valid JSON, wrong schema.
            _ => format!(r#"{{"unexpected":{i}}}"#).into_bytes(),
        };
        let mut headers = BTreeMap::new();
        headers.insert("x-forwarded-for".to_string(), format!("198.51.100.{}", i % 256));
        headers.insert("device_id".to_string(), format!("device-{i}"));
        server.ingest_result(IngressRequest { headers, body }, VirtualTime::from_millis(i));
    }

    assert_eq!(server.audit_forbidden_fields(), 0);
    // Retired task kept exactly its pre-retirement row.
    assert_eq!(server.fetch_all_results("closed").unwrap().len(), 1);
    // Serialized rows never mention header-derived values.
    for row in server.fetch_all_results("open").unwrap() {
        let text = String::from_utf8(wire::to_canonical_json(&row).unwrap()).unwrap();
        assert!(!text.contains("198.51.100."));
        assert!(!text.contains("device-"));
    }
}
