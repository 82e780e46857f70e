use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use super::{check_request, ModelBackend, ModelError, ModelReply, ModelRequest};

/// Key in a scenario file whose reply answers any otherwise unmatched request.
pub const DEFAULT_KEY: &str = "*";

/// Scripted backend: a fixed map from scenario key to reply text.
///
/// Lookup tries the exact key, then the key with its last `/` segment
/// replaced by `*` (so `patch/t1/*` answers every round of task `t1`), then
/// the default reply. Without a default the mock is strict and an unknown
/// key is a [`ModelError::ScenarioMiss`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockBackend {
    name: String,
    replies: BTreeMap<String, String>,
    default: Option<String>,
}

impl MockBackend {
    pub fn new(replies: BTreeMap<String, String>) -> Self {
        let mut replies = replies;
        let default = replies.remove(DEFAULT_KEY);
        MockBackend { name: "mock".into(), replies, default }
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        Self::new(pairs.into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect())
    }

    pub fn from_file(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        let replies: BTreeMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| ModelError::Config(format!("scenario {} is not a JSON string map: {e}", path.display())))?;
        let mut mock = Self::new(replies);
        mock.name = format!("mock:{}", path.display());
        Ok(mock)
    }

    /// Reply used for keys the script does not mention; `None` makes the mock strict.
    pub fn with_default(mut self, default: Option<String>) -> Self {
        self.default = default;
        self
    }

    pub fn is_strict(&self) -> bool {
        self.default.is_none()
    }

    fn lookup(&self, key: &str) -> Option<&str> {
        if let Some(r) = self.replies.get(key) {
            return Some(r);
        }
        if let Some((prefix, _)) = key.rsplit_once('/') {
            if let Some(r) = self.replies.get(&format!("{prefix}/*")) {
                return Some(r);
            }
        }
        self.default.as_deref()
    }
}

impl ModelBackend for MockBackend {
    fn id(&self) -> String {
        self.name.clone()
    }

    fn complete(&self, req: &ModelRequest) -> Result<ModelReply, ModelError> {
        check_request(req)?;
        let started = Instant::now();
        let text = self.lookup(&req.scenario_key).ok_or_else(|| ModelError::ScenarioMiss(req.scenario_key.clone()))?;
        Ok(ModelReply { text: text.to_string(), backend_id: self.id(), latency_ms: started.elapsed().as_millis() as u64 })
    }
}
