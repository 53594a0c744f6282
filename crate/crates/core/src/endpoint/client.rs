//! Blocking chat-completions client with retries and a concurrency cap.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Credential, EndpointConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// Metadata of one HTTP attempt. Never contains the credential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    /// Caller-supplied label, e.g. `team-2/action`.
    pub tag: String,
    pub path: String,
    /// 0 for the first try.
    pub attempt: u32,
    pub status: Option<u16>,
    pub latency_ms: f64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Omitted in privacy mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

enum Attempt {
    Done(Value),
    Retry(String),
    Fatal(Error),
}

pub struct ChatClient {
    config: EndpointConfig,
    credential: Option<Credential>,
    agent: ureq::Agent,
    slots: Semaphore,
    log: Mutex<Vec<CallRecord>>,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient")
            .field("config", &self.config)
            .field("credential", &self.credential)
            .finish_non_exhaustive()
    }
}

impl ChatClient {
    /// Resolves the credential from `config.api_key_env`.
    pub fn new(config: EndpointConfig) -> Result<Self> {
        let cred = Credential::from_env(&config.api_key_env)?;
        Self::with_credential(config, Some(cred))
    }

    pub fn with_credential(config: EndpointConfig, credential: Option<Credential>) -> Result<Self> {
        config.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            slots: Semaphore {
                free: Mutex::new(config.max_concurrency),
                cv: Condvar::new(),
            },
            config,
            credential,
            agent,
            log: Mutex::new(Vec::new()),
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn call_log(&self) -> Vec<CallRecord> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Sends one chat-completions request and returns the first choice's text.
    pub fn call_chat(&self, tag: &str, messages: &[ChatMessage]) -> Result<String> {
        if messages.is_empty() {
            return Err(Error::validation("chat request needs at least one message"));
        }
        let body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        });
        let v = self.post_json(tag, "chat/completions", &body)?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::Backend("response has no choices[0].message.content".into()))
    }

    /// POSTs JSON with retries on transport errors, 5xx and 429.
    ///
    /// 401 and 403 fail immediately with a configuration error; other 4xx
    /// fail immediately with a backend error.
    pub fn post_json(&self, tag: &str, path: &str, body: &Value) -> Result<Value> {
        let url = self.config.url(path);
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.config.backoff(attempt));
            }
            match self.attempt(tag, path, &url, body, attempt) {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(msg) => last = msg,
            }
        }
        Err(Error::Backend(format!(
            "{} retries exhausted for {path}: {last}",
            self.config.max_retries
        )))
    }

    fn attempt(&self, tag: &str, path: &str, url: &str, body: &Value, attempt: u32) -> Attempt {
        let _slot = self.slots.acquire();
        let start = Instant::now();
        let mut req = self
            .agent
            .post(url)
            .header("Content-Type", "application/json");
        if let Some(c) = &self.credential {
            req = req.header("Authorization", &format!("Bearer {}", c.expose()));
        }
        let result = req.send(body.to_string());
        let latency_ms = start.elapsed().as_secs_f64() * 1e3;
        let mut rec = CallRecord {
            tag: tag.to_string(),
            path: path.to_string(),
            attempt,
            status: None,
            latency_ms,
            ok: false,
            error: None,
            response: None,
        };
        let outcome = match result {
            Err(e) => {
                let msg = format!("transport: {e}");
                rec.error = Some(msg.clone());
                Attempt::Retry(msg)
            }
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                rec.status = Some(status);
                let text = resp.body_mut().read_to_string().unwrap_or_default();
                if !self.config.privacy {
                    rec.response = Some(text.clone());
                }
                match status {
                    200..=299 => match serde_json::from_str::<Value>(&text) {
                        Ok(v) => {
                            rec.ok = true;
                            Attempt::Done(v)
                        }
                        Err(e) => {
                            rec.error = Some(format!("invalid JSON: {e}"));
                            Attempt::Fatal(Error::Backend(format!("invalid JSON from {path}: {e}")))
                        }
                    },
                    401 | 403 => {
                        rec.error = Some("authentication rejected".into());
                        Attempt::Fatal(Error::config(format!(
                            "endpoint rejected credentials from {} (HTTP {status})",
                            self.config.api_key_env
                        )))
                    }
                    429 | 500..=599 => {
                        let msg = format!("HTTP {status}");
                        rec.error = Some(msg.clone());
                        Attempt::Retry(msg)
                    }
                    _ => {
                        rec.error = Some(format!("HTTP {status}"));
                        Attempt::Fatal(Error::Backend(format!("HTTP {status} from {path}")))
                    }
                }
            }
        };
        tracing::debug!(tag, path, attempt, status = ?rec.status, latency_ms, ok = rec.ok, "endpoint call");
        self.log.lock().unwrap_or_else(|e| e.into_inner()).push(rec);
        outcome
    }
}
