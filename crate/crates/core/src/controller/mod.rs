//! Controllers turn a user instruction into a [`RoutedResponse`].
//!
//! Three implementations share the [`Controller`] trait: a deterministic
//! keyword rule router, a replay router that returns gold responses from a
//! corpus, and a remote adapter for a served model.

mod remote;
mod replay;
mod rules;

pub use remote::{EndpointConfig, RemoteController, RemoteOutcome, RemoteRequest, RemoteResponse, API_KEY_ENV};
pub use replay::ReplayController;
pub use rules::{Extractor, Rule, RuleError, RuleRouter, RuleSet};

use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::grammar::{ParseError, RoutedResponse};

/// One prior exchange in a conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub instruction: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ControllerRequest {
    pub instruction: String,
    pub attachments: Vec<Artifact>,
    pub history: Vec<Turn>,
    /// Corpus record this request came from; used by the replay router.
    pub record_id: Option<String>,
}

impl ControllerRequest {
    pub fn new(instruction: impl Into<String>) -> Self {
        ControllerRequest { instruction: instruction.into(), ..Default::default() }
    }

    pub fn with_attachments(mut self, attachments: Vec<Artifact>) -> Self {
        self.attachments = attachments;
        self
    }

    pub fn with_history(mut self, history: Vec<Turn>) -> Self {
        self.history = history;
        self
    }

    pub fn with_record_id(mut self, id: impl Into<String>) -> Self {
        self.record_id = Some(id.into());
        self
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        if self.instruction.trim().is_empty() {
            return Err(ControllerError::InvalidRequest("instruction must not be empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ControllerError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("controller unavailable: {0}")]
    ControllerUnavailable(String),
    #[error("no rule matches the instruction")]
    NoRoute,
    #[error("controller output is malformed ({error}): {raw:?}")]
    MalformedControllerOutput { raw: String, error: String },
    #[error("controller produced {actual} steps, more than the maximum of {max}")]
    ChainTooLong { actual: usize, max: usize },
    #[error("no replay record for {0}")]
    UnknownRecord(String),
}

impl ControllerError {
    pub(crate) fn malformed(raw: &str, err: &ParseError) -> Self {
        ControllerError::MalformedControllerOutput { raw: raw.to_string(), error: err.to_string() }
    }
}

pub trait Controller: Send + Sync {
    fn route(&self, request: &ControllerRequest) -> Result<RoutedResponse, ControllerError>;

    fn name(&self) -> &str;
}

impl<C: Controller + ?Sized> Controller for Box<C> {
    fn route(&self, request: &ControllerRequest) -> Result<RoutedResponse, ControllerError> {
        (**self).route(request)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<C: Controller + ?Sized> Controller for std::sync::Arc<C> {
    fn route(&self, request: &ControllerRequest) -> Result<RoutedResponse, ControllerError> {
        (**self).route(request)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

pub(crate) fn check_chain(resp: &RoutedResponse, max: usize) -> Result<(), ControllerError> {
    let actual = resp.step_count();
    if actual > max {
        return Err(ControllerError::ChainTooLong { actual, max });
    }
    Ok(())
}
