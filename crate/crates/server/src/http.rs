//! Optional HTTP service mode.
//!
//! Exposes the same operations the simulator calls in-process:
//!
//! ```text
//! GET  /v1/plugins/{plugin_id}/tasks        active task descriptors
//! GET  /v1/blobs/{content_hash}             attachment bytes
//! POST /v1/results                          200 stored, 410 retired, 429 throttled, 400 rejected
//! POST /v1/telemetry                        200 stored, 400 rejected
//! GET  /v1/tasks/{task_id}/results?page=N   paginated envelopes
//! GET  /v1/plugins/{plugin_id}/telemetry    summary
//! POST /v1/tasks                            publish {descriptor, attachments_b64}
//! ```

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::Deserialize;

use fedtask_core::{AttachmentBlob, TaskDescriptor, VirtualTime};

use crate::service::{FedServer, IngestOutcome, IngressRequest, ServerError};

type NowFn = Arc<dyn Fn() -> VirtualTime + Send + Sync>;

#[derive(Clone)]
pub struct AppState {
    server: Arc<FedServer>,
    now: NowFn,
}

/// Wall-clock time as virtual milliseconds since the Unix epoch.
pub fn wall_clock() -> VirtualTime {
    let millis = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default().as_millis();
    VirtualTime::from_millis(millis as u64)
}

pub fn router(server: Arc<FedServer>, now: NowFn) -> Router {
    let state = AppState { server, now };
    Router::new()
        .route("/v1/plugins/{plugin_id}/tasks", get(list_tasks))
        .route("/v1/plugins/{plugin_id}/telemetry", get(telemetry_summary))
        .route("/v1/blobs/{content_hash}", get(fetch_blob))
        .route("/v1/results", post(ingest_result))
        .route("/v1/telemetry", post(ingest_telemetry))
        .route("/v1/tasks/{task_id}/results", get(fetch_results))
        .route("/v1/tasks", post(publish_task))
        .with_state(state)
}

/// Serves the API until the process exits.
pub async fn serve(addr: std::net::SocketAddr, server: Arc<FedServer>) -> std::io::Result<()> {
    let app = router(server, Arc::new(wall_clock));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, app).await
}

fn ingress(headers: HeaderMap, body: Bytes) -> IngressRequest {
    let mut map = BTreeMap::new();
    for (name, value) in headers.iter() {
        map.insert(name.to_string(), String::from_utf8_lossy(value.as_bytes()).into_owned());
    }
    IngressRequest { headers: map, body: body.to_vec() }
}

fn outcome_response(outcome: IngestOutcome) -> Response {
    match outcome {
        IngestOutcome::Stored => {
            (StatusCode::OK, Json(serde_json::json!({"outcome": "stored"}))).into_response()
        }
        IngestOutcome::IgnoredRetired => {
            (StatusCode::GONE, Json(serde_json::json!({"outcome": "ignored_retired"}))).into_response()
        }
        IngestOutcome::Throttled => {
            (StatusCode::TOO_MANY_REQUESTS, Json(serde_json::json!({"outcome": "throttled"})))
                .into_response()
        }
        IngestOutcome::Rejected(reason) => (
            StatusCode::BAD_REQUEST,
            Json(serde_json::json!({"outcome": "rejected", "reason": reason})),
        )
            .into_response(),
    }
}

async fn list_tasks(State(state): State<AppState>, Path(plugin_id): Path<String>) -> Response {
    let tasks = state.server.list_tasks(&plugin_id, (state.now)());
    Json(tasks).into_response()
}

async fn fetch_blob(State(state): State<AppState>, Path(content_hash): Path<String>) -> Response {
    match state.server.fetch_blob(&content_hash) {
        Some(bytes) => bytes.into_response(),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

async fn ingest_result(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    outcome_response(state.server.ingest_result(ingress(headers, body), (state.now)()))
}

async fn ingest_telemetry(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    outcome_response(state.server.ingest_telemetry(ingress(headers, body), (state.now)()))
}

#[derive(Deserialize)]
struct PageQuery {
    #[serde(default)]
    page: usize,
}

async fn fetch_results(
    State(state): State<AppState>,
    Path(task_id): Path<String>,
    Query(query): Query<PageQuery>,
) -> Response {
    match state.server.fetch_results(&task_id, query.page) {
        Ok(rows) => Json(rows).into_response(),
        Err(ServerError::UnknownTask(_)) => StatusCode::NOT_FOUND.into_response(),
        Err(error) => (StatusCode::INTERNAL_SERVER_ERROR, error.to_string()).into_response(),
    }
}

#[derive(Deserialize)]
struct WindowQuery {
    #[serde(default)]
    start_millis: u64,
    end_millis: Option<u64>,
}

async fn telemetry_summary(
    State(state): State<AppState>,
    Path(plugin_id): Path<String>,
    Query(query): Query<WindowQuery>,
) -> Response {
    let window = (
        VirtualTime::from_millis(query.start_millis),
        VirtualTime::from_millis(query.end_millis.unwrap_or(u64::MAX)),
    );
    Json(state.server.telemetry_summary(&plugin_id, window)).into_response()
}

#[derive(Deserialize)]
struct PublishBody {
    descriptor: TaskDescriptor,
    #[serde(default)]
    attachments_b64: Vec<String>,
}

async fn publish_task(State(state): State<AppState>, Json(body): Json<PublishBody>) -> Response {
    let mut attachments = Vec::new();
    for encoded in &body.attachments_b64 {
        match base64::engine::general_purpose::STANDARD.decode(encoded) {
            Ok(bytes) => attachments.push(AttachmentBlob::new(bytes)),
            Err(error) => {
                return (StatusCode::BAD_REQUEST, format!("invalid attachment encoding: {error}"))
                    .into_response()
            }
        }
    }
    match state.server.publish_task(body.descriptor, attachments) {
        Ok(()) => StatusCode::OK.into_response(),
        Err(error @ ServerError::DuplicateTask(_)) => {
            (StatusCode::CONFLICT, error.to_string()).into_response()
        }
        Err(error) => (StatusCode::BAD_REQUEST, error.to_string()).into_response(),
    }
}
