//! Minimal JSON-over-HTTP transport shared by the remote controller and the
//! HTTP specialist backend. Tests substitute scripted transports.

use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub trait Transport: Send + Sync {
    /// POST `body` (a JSON document) to `url`. Non-2xx statuses are returned
    /// as responses, not errors.
    fn post_json(
        &self,
        url: &str,
        body: &str,
        headers: &[(String, String)],
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError>;
}

/// Blocking HTTP client.
#[derive(Debug, Clone, Default)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        body: &str,
        headers: &[(String, String)],
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        let mut req = agent.post(url).set("Content-Type", "application/json");
        for (name, value) in headers {
            req = req.set(name, value);
        }
        let resp = match req.send_string(body) {
            Ok(resp) => resp,
            Err(ureq::Error::Status(_, resp)) => resp,
            Err(ureq::Error::Transport(t)) => return Err(classify(t)),
        };
        let status = resp.status();
        let body = resp.into_string().map_err(|e| TransportError::Io(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

fn classify(err: ureq::Transport) -> TransportError {
    let msg = err.to_string();
    let timed_out = std::error::Error::source(&err)
        .and_then(|s| s.downcast_ref::<std::io::Error>())
        .is_some_and(|io| matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock));
    if timed_out || msg.contains("timed out") {
        TransportError::Timeout
    } else if matches!(err.kind(), ureq::ErrorKind::ConnectionFailed | ureq::ErrorKind::Dns) {
        TransportError::Connect(msg)
    } else {
        TransportError::Io(msg)
    }
}

/// Whether a failed exchange is worth retrying.
pub fn is_transient_status(status: u16) -> bool {
    matches!(status, 429 | 502 | 503 | 504)
}
