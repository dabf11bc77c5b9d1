use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{check_chain, Controller, ControllerError, ControllerRequest, Turn};
use crate::executor::DEFAULT_MAX_CHAIN_LENGTH;
use crate::grammar::{parse_response, RoutedResponse};
use crate::task::token_table;
use crate::transport::{is_transient_status, HttpTransport, Transport};

/// Environment variable that supplies the controller credential.
pub const API_KEY_ENV: &str = "TASKROUTE_CONTROLLER_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub url: String,
    /// Never read from config files; see [`EndpointConfig::with_env_credential`].
    #[serde(skip)]
    pub api_key: Option<String>,
    #[serde(default = "default_system_prompt")]
    pub system_prompt: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Base delay; attempt `n` waits `backoff_ms * 2^n`.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_max_chain")]
    pub max_chain_length: usize,
}

fn default_timeout_ms() -> u64 {
    30_000
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    200
}
fn default_max_chain() -> usize {
    DEFAULT_MAX_CHAIN_LENGTH
}

/// Instructions for a served model describing the routing-token format.
pub fn default_system_prompt() -> String {
    let mut out = String::from(
        "You route user requests to specialist models. For each task the request needs, emit the task's \
         opening tag, a concise prompt for the specialist, and the closing tag, in execution order \
         (at most five tasks). Answer directly without tags when no specialist is needed.\nTags:\n",
    );
    for spec in token_table() {
        out.push_str(&format!("{}...{}\n", spec.open_tag(), spec.close_tag()));
    }
    out
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>) -> EndpointConfig {
        EndpointConfig {
            url: url.into(),
            api_key: None,
            system_prompt: default_system_prompt(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            max_chain_length: default_max_chain(),
        }
    }

    /// Take the credential from the environment when present.
    pub fn with_env_credential(mut self) -> EndpointConfig {
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            if !key.is_empty() {
                self.api_key = Some(key);
            }
        }
        self
    }

    fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.backoff_ms.saturating_mul(1u64 << attempt.min(16)))
    }
}

/// Wire request sent to the controller endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteRequest {
    pub system: String,
    pub instruction: String,
    pub attachments: Vec<String>,
    pub history: Vec<Turn>,
}

/// Wire response expected from the controller endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteResponse {
    pub text: String,
}

/// A routed response together with what it took to obtain it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteOutcome {
    pub response: RoutedResponse,
    pub retries: u32,
    pub raw: String,
}

/// Adapter for a served controller model speaking JSON over HTTP.
#[derive(Clone)]
pub struct RemoteController {
    config: EndpointConfig,
    transport: Arc<dyn Transport>,
}

impl std::fmt::Debug for RemoteController {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteController").field("url", &self.config.url).finish_non_exhaustive()
    }
}

impl RemoteController {
    pub fn new(config: EndpointConfig) -> RemoteController {
        RemoteController { config, transport: Arc::new(HttpTransport) }
    }

    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> RemoteController {
        self.transport = transport;
        self
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn route_detailed(&self, request: &ControllerRequest) -> Result<RemoteOutcome, ControllerError> {
        request.validate()?;
        let body = serde_json::to_string(&RemoteRequest {
            system: self.config.system_prompt.clone(),
            instruction: request.instruction.clone(),
            attachments: request.attachments.iter().map(|a| a.locator.clone()).collect(),
            history: request.history.clone(),
        })
        .map_err(|e| ControllerError::InvalidRequest(e.to_string()))?;
        let mut headers = Vec::new();
        if let Some(key) = &self.config.api_key {
            headers.push(("Authorization".to_string(), format!("Bearer {key}")));
        }
        let timeout = Duration::from_millis(self.config.timeout_ms);

        let mut attempt = 0;
        let text = loop {
            let failure = match self.transport.post_json(&self.config.url, &body, &headers, timeout) {
                Ok(resp) if (200..300).contains(&resp.status) => break resp.body,
                Ok(resp) if is_transient_status(resp.status) => format!("HTTP {}", resp.status),
                Ok(resp) => {
                    return Err(ControllerError::ControllerUnavailable(format!(
                        "HTTP {}: {}",
                        resp.status,
                        truncate(&resp.body)
                    )))
                }
                Err(e) => e.to_string(),
            };
            if attempt >= self.config.max_retries {
                return Err(ControllerError::ControllerUnavailable(format!(
                    "{failure} after {} attempts",
                    attempt + 1
                )));
            }
            std::thread::sleep(self.config.backoff(attempt));
            attempt += 1;
        };

        let raw = serde_json::from_str::<RemoteResponse>(&text)
            .map_err(|e| ControllerError::MalformedControllerOutput { raw: text.clone(), error: e.to_string() })?
            .text;
        let response = parse_response(&raw).map_err(|e| ControllerError::malformed(&raw, &e))?;
        check_chain(&response, self.config.max_chain_length)?;
        Ok(RemoteOutcome { response, retries: attempt, raw })
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

impl Controller for RemoteController {
    fn route(&self, request: &ControllerRequest) -> Result<RoutedResponse, ControllerError> {
        self.route_detailed(request).map(|o| o.response)
    }

    fn name(&self) -> &str {
        "remote"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{HttpResponse, TransportError};
    use std::sync::Mutex;

    struct Scripted(Mutex<Vec<Result<HttpResponse, TransportError>>>, Mutex<Vec<String>>);

    impl Transport for Scripted {
        fn post_json(
            &self,
            _url: &str,
            body: &str,
            headers: &[(String, String)],
            _timeout: Duration,
        ) -> Result<HttpResponse, TransportError> {
            self.1.lock().unwrap().push(format!("{body}|{headers:?}"));
            self.0.lock().unwrap().remove(0)
        }
    }

    fn ok(text: &str) -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse { status: 200, body: serde_json::to_string(&RemoteResponse { text: text.into() }).unwrap() })
    }

    fn controller(script: Vec<Result<HttpResponse, TransportError>>) -> (RemoteController, Arc<Scripted>) {
        let t = Arc::new(Scripted(Mutex::new(script), Mutex::new(Vec::new())));
        let mut cfg = EndpointConfig::new("http://controller.invalid/route");
        cfg.backoff_ms = 0;
        cfg.api_key = Some("k".into());
        (RemoteController::new(cfg).with_transport(t.clone()), t)
    }

    #[test]
    fn malformed_output_keeps_raw_text() {
        let (c, _) = controller(vec![ok("<image_gen>cat")]);
        match c.route(&ControllerRequest::new("cat")) {
            Err(ControllerError::MalformedControllerOutput { raw, .. }) => assert_eq!(raw, "<image_gen>cat"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn retries_transient_failures() {
        let (c, t) = controller(vec![
            Err(TransportError::Timeout),
            Ok(HttpResponse { status: 503, body: String::new() }),
            ok("<image_gen>a cat</image_gen>"),
        ]);
        let out = c.route_detailed(&ControllerRequest::new("cat")).unwrap();
        assert_eq!(out.retries, 2);
        assert_eq!(out.response.step_count(), 1);
        let sent = t.1.lock().unwrap();
        assert_eq!(sent.len(), 3);
        assert!(sent[0].contains("Bearer k"));
    }

    #[test]
    fn gives_up_after_retry_budget() {
        let (c, _) = controller((0..4).map(|_| Err(TransportError::Timeout)).collect());
        assert!(matches!(c.route(&ControllerRequest::new("cat")), Err(ControllerError::ControllerUnavailable(_))));
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (c, t) = controller(vec![Ok(HttpResponse { status: 401, body: "denied".into() })]);
        assert!(matches!(c.route(&ControllerRequest::new("cat")), Err(ControllerError::ControllerUnavailable(_))));
        assert_eq!(t.1.lock().unwrap().len(), 1);
    }

    #[test]
    fn backoff_doubles() {
        let cfg = EndpointConfig::new("http://x");
        assert_eq!(cfg.backoff(0), Duration::from_millis(200));
        assert_eq!(cfg.backoff(2), Duration::from_millis(800));
    }
}
