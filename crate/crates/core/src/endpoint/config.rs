use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ENV_BASE_URL: &str = "SHAREGATE_BASE_URL";
pub const ENV_MODEL: &str = "SHAREGATE_MODEL";
pub const DEFAULT_KEY_ENV: &str = "SHAREGATE_API_KEY";

/// Connection settings for a chat-completions endpoint.
///
/// Holds the *name* of the environment variable with the credential, never
/// the credential itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// e.g. `http://localhost:8000/v1`; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// First retry waits this long; each further retry doubles it.
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    pub temperature: f64,
    /// Concurrent requests allowed from one client.
    pub max_concurrency: usize,
    /// Omit prompt and completion text from the call log.
    pub privacy: bool,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "default".into(),
            api_key_env: DEFAULT_KEY_ENV.into(),
            timeout_ms: 60_000,
            max_retries: 3,
            backoff_base_ms: 500,
            backoff_max_ms: 8_000,
            temperature: 0.0,
            max_concurrency: 4,
            privacy: false,
        }
    }
}

impl EndpointConfig {
    /// Defaults overridden by `SHAREGATE_BASE_URL` and `SHAREGATE_MODEL`.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Ok(u) = std::env::var(ENV_BASE_URL) {
            cfg.base_url = u;
        }
        if let Ok(m) = std::env::var(ENV_MODEL) {
            cfg.model = m;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout_ms == 0 {
            return Err(Error::config("timeout_ms must be positive"));
        }
        if self.max_concurrency == 0 {
            return Err(Error::config("max_concurrency must be at least 1"));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(Error::config(format!(
                "base_url {:?} is not an http(s) URL",
                self.base_url
            )));
        }
        if self.model.trim().is_empty() {
            return Err(Error::config("model must be non-empty"));
        }
        Ok(())
    }

    /// Wait before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64
            .checked_shl(retry.saturating_sub(1))
            .unwrap_or(u64::MAX);
        Duration::from_millis(
            self.backoff_base_ms
                .saturating_mul(factor)
                .min(self.backoff_max_ms),
        )
    }

    pub fn url(&self, path: &str) -> String {
        format!(
            "{}/{}",
            self.base_url.trim_end_matches('/'),
            path.trim_start_matches('/')
        )
    }
}

/// A bearer token whose `Debug` and `Display` never print the value.
#[derive(Clone, PartialEq, Eq)]
pub struct Credential(String);

impl Credential {
    pub fn new(secret: impl Into<String>) -> Self {
        Self(secret.into())
    }

    pub fn from_env(var: &str) -> Result<Self> {
        match std::env::var(var) {
            Ok(v) if !v.is_empty() => Ok(Self(v)),
            _ => Err(Error::config(format!(
                "credential variable {var} is not set"
            ))),
        }
    }

    pub(crate) fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Credential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Credential(<redacted>)")
    }
}

impl fmt::Display for Credential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<redacted>")
    }
}
