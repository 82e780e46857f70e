use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde_json::{json, Value};

use super::{check_request, ModelBackend, ModelError, ModelReply, ModelRequest};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteConfig {
    pub endpoint: String,
    /// Name of the environment variable holding a bearer token, if any.
    pub token_env: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub concurrency: usize,
    pub max_attempts: u32,
    /// Delay before the second attempt; doubled for each later one.
    pub backoff: Duration,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: String::new(),
            token_env: None,
            model: "default".into(),
            timeout: Duration::from_secs(120),
            concurrency: 4,
            max_attempts: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

/// Counting semaphore bounding in-flight requests.
struct Slots {
    free: Mutex<usize>,
    released: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.released.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.released.notify_one();
    }
}

/// Chat-completion client: one system and one user message per call.
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    slots: Slots,
}

enum Failure {
    Retryable(String),
    TimedOut,
    Fatal(String),
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, ModelError> {
        if config.endpoint.is_empty() {
            return Err(ModelError::Config("remote endpoint is empty".into()));
        }
        if config.concurrency == 0 || config.max_attempts == 0 {
            return Err(ModelError::Config("concurrency and max attempts must be positive".into()));
        }
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        let slots = Slots { free: Mutex::new(config.concurrency), released: Condvar::new() };
        Ok(RemoteBackend { config, agent, slots })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn body(&self, req: &ModelRequest) -> Value {
        let user = if req.attachments.is_empty() {
            json!(req.user_text)
        } else {
            let mut parts = vec![json!({"type": "text", "text": req.user_text})];
            for a in &req.attachments {
                let data = base64::engine::general_purpose::STANDARD.encode(&a.bytes);
                parts.push(json!({"type": "image_url", "image_url": {"url": format!("data:{};base64,{data}", a.mime)}}));
            }
            Value::Array(parts)
        };
        json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": req.system_text},
                {"role": "user", "content": user},
            ],
        })
    }

    fn attempt(&self, body: &str) -> Result<String, Failure> {
        let mut call = self.agent.post(&self.config.endpoint).set("Content-Type", "application/json");
        if let Some(var) = &self.config.token_env {
            if let Ok(token) = std::env::var(var) {
                call = call.set("Authorization", &format!("Bearer {token}"));
            }
        }
        let response = match call.send_string(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let detail = format!("HTTP {code}: {}", r.into_string().unwrap_or_default());
                return Err(if code == 429 || code >= 500 { Failure::Retryable(detail) } else { Failure::Fatal(detail) });
            }
            Err(ureq::Error::Transport(t)) => {
                let text = t.to_string();
                return Err(if text.contains("timed out") { Failure::TimedOut } else { Failure::Retryable(text) });
            }
        };
        let text = response.into_string().map_err(|e| Failure::Retryable(e.to_string()))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| Failure::Fatal(format!("reply is not JSON: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Failure::Fatal("reply has no choices[0].message.content".into()))
    }
}

impl ModelBackend for RemoteBackend {
    fn id(&self) -> String {
        format!("remote:{}", self.config.model)
    }

    fn complete(&self, req: &ModelRequest) -> Result<ModelReply, ModelError> {
        check_request(req)?;
        let body = self.body(req).to_string();
        let _slot = self.slots.acquire();
        let started = Instant::now();
        let mut delay = self.config.backoff;
        let mut last = Failure::Retryable(String::new());
        for attempt in 1..=self.config.max_attempts {
            if attempt > 1 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.attempt(&body) {
                Ok(text) => {
                    let latency_ms = started.elapsed().as_millis() as u64;
                    return Ok(ModelReply { text, backend_id: self.id(), latency_ms });
                }
                Err(Failure::Fatal(message)) => return Err(ModelError::Transport { attempts: attempt, message }),
                Err(f) => {
                    log::warn!("model call attempt {attempt} failed");
                    last = f;
                }
            }
        }
        let attempts = self.config.max_attempts;
        Err(match last {
            Failure::TimedOut => ModelError::Timeout { attempts },
            Failure::Retryable(message) | Failure::Fatal(message) => ModelError::Transport { attempts, message },
        })
    }
}
