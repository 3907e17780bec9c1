use std::time::Duration;

use reqgate_core::registry::{ApiRequest, ApiResponse, CounterSnapshot, Transport, TransportError};
use serde_json::Value;
use ureq::Agent;

/// Talks to a registry over HTTP. Redirects are returned as-is so a 302
/// stays observable.
pub struct HttpTransport {
    base: String,
    agent: Agent,
}

impl HttpTransport {
    pub fn new(base_url: &str) -> Self {
        let agent: Agent = Agent::config_builder()
            .max_redirects(0)
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self {
            base: base_url.trim_end_matches('/').to_string(),
            agent,
        }
    }

    fn read_json(resp: &mut ureq::http::Response<ureq::Body>) -> Result<Value, TransportError> {
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Io(e.to_string()))?;
        if text.trim().is_empty() {
            return Ok(Value::Null);
        }
        serde_json::from_str(&text).map_err(|e| TransportError::Protocol(format!("body is not JSON: {e}")))
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ApiRequest) -> Result<ApiResponse, TransportError> {
        let url = format!("{}{}", self.base, request.endpoint.path());
        let mut req = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(auth) = &request.authorization {
            req = req.header("Authorization", auth);
        }
        let mut resp = req
            .send(&request.body[..])
            .map_err(|e| TransportError::Io(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = Self::read_json(&mut resp)?;
        Ok(ApiResponse { status, body })
    }

    fn counters(&self) -> Result<CounterSnapshot, TransportError> {
        let mut resp = self
            .agent
            .get(format!("{}/api/counters", self.base))
            .call()
            .map_err(|e| TransportError::Io(e.to_string()))?;
        if resp.status() != 200 {
            return Err(TransportError::Protocol(format!("counters returned {}", resp.status())));
        }
        serde_json::from_value(Self::read_json(&mut resp)?).map_err(|e| TransportError::Protocol(e.to_string()))
    }
}
