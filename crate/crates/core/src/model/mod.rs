//! Backends that turn a prompt into model text.
//!
//! Every model-backed step goes through [`ModelBackend::complete`]. The
//! [`MockBackend`] replays canned replies from a scenario file and the
//! [`RemoteBackend`] talks to an OpenAI-style chat-completion endpoint.

mod mock;
mod remote;

use std::sync::Arc;

pub use mock::MockBackend;
pub use remote::{RemoteBackend, RemoteConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attachment {
    /// e.g. `image/x-portable-graymap`
    pub mime: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelRequest {
    pub system_text: String,
    pub user_text: String,
    pub attachments: Vec<Attachment>,
    /// Identifies the call for scripted replay; see [`scenario_key`].
    pub scenario_key: String,
}

impl ModelRequest {
    pub fn new(system_text: impl Into<String>, user_text: impl Into<String>, scenario_key: impl Into<String>) -> Self {
        ModelRequest {
            system_text: system_text.into(),
            user_text: user_text.into(),
            attachments: Vec::new(),
            scenario_key: scenario_key.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelReply {
    pub text: String,
    pub backend_id: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("no scripted reply for scenario key {0:?}")]
    ScenarioMiss(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// The step a request belongs to; the first segment of its scenario key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Patch,
    Segment,
    Fallback,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Patch => "patch",
            Role::Segment => "segment",
            Role::Fallback => "fallback",
        }
    }
}

/// Stable key `role/task/round` used by scripted backends.
pub fn scenario_key(role: Role, task_id: &str, round: u32) -> String {
    format!("{}/{task_id}/{round}", role.as_str())
}

pub trait ModelBackend: Send + Sync {
    fn id(&self) -> String;

    fn complete(&self, req: &ModelRequest) -> Result<ModelReply, ModelError>;
}

impl<T: ModelBackend + ?Sized> ModelBackend for Arc<T> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn complete(&self, req: &ModelRequest) -> Result<ModelReply, ModelError> {
        (**self).complete(req)
    }
}

impl<T: ModelBackend + ?Sized> ModelBackend for &T {
    fn id(&self) -> String {
        (**self).id()
    }

    fn complete(&self, req: &ModelRequest) -> Result<ModelReply, ModelError> {
        (**self).complete(req)
    }
}

pub(crate) fn check_request(req: &ModelRequest) -> Result<(), ModelError> {
    if req.user_text.is_empty() {
        return Err(ModelError::InvalidRequest("user text is empty".into()));
    }
    Ok(())
}

/// Parses `mock:<scenario.json>` or `http:<url>` / `https:<url>`.
pub fn backend_from_spec(spec: &str, remote: RemoteConfig) -> Result<Arc<dyn ModelBackend>, ModelError> {
    if let Some(path) = spec.strip_prefix("mock:") {
        return Ok(Arc::new(MockBackend::from_file(std::path::Path::new(path))?));
    }
    if let Some(rest) = spec.strip_prefix("http:") {
        // Accept both `http:URL` and a bare `http://host` form.
        let endpoint = if rest.starts_with("//") { format!("http:{rest}") } else { rest.to_string() };
        return Ok(Arc::new(RemoteBackend::new(RemoteConfig { endpoint, ..remote })?));
    }
    if spec.starts_with("https:") {
        return Ok(Arc::new(RemoteBackend::new(RemoteConfig { endpoint: spec.to_string(), ..remote })?));
    }
    Err(ModelError::Config(format!("unknown backend {spec:?}; expected mock:<file> or http:<url>")))
}
