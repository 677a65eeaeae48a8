//! Device transport that posts to a fed-server HTTP instance.

use fedtask_core::wire::to_canonical_json;
use fedtask_core::{ResultEnvelope, TelemetryRecord};
use fedtask_device::{DeliveryStatus, ResultTransport, TransportError};

pub struct HttpTransport {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpTransport { base_url: base_url.into(), client: reqwest::blocking::Client::new() }
    }

    fn post(&self, path: &str, body: Vec<u8>) -> Result<DeliveryStatus, TransportError> {
        let response = self
            .client
            .post(format!("{}{path}", self.base_url))
            .body(body)
            .send()
            .map_err(|e| TransportError::Unavailable(e.to_string()))?;
        match response.status().as_u16() {
            200 => Ok(DeliveryStatus::Stored),
            410 => Ok(DeliveryStatus::IgnoredRetired),
            429 => Ok(DeliveryStatus::Throttled),
            400 => Ok(DeliveryStatus::Rejected),
            other => Err(TransportError::Unavailable(format!("unexpected status {other}"))),
        }
    }
}

impl ResultTransport for HttpTransport {
    fn submit_result(&self, envelope: &ResultEnvelope) -> Result<DeliveryStatus, TransportError> {
        let body =
            to_canonical_json(envelope).map_err(|e| TransportError::Unavailable(e.to_string()))?;
        self.post("/v1/results", body)
    }

    fn submit_telemetry(&self, telemetry: &TelemetryRecord) -> Result<DeliveryStatus, TransportError> {
        let body =
            to_canonical_json(telemetry).map_err(|e| TransportError::Unavailable(e.to_string()))?;
        self.post("/v1/telemetry", body)
    }
}
