//! Chat-completions client used by the remote classifier and the reply generator.
//!
//! Requests go out as `{"model", "messages", "temperature": 0}` and the reply
//! text is read from `choices[0].message.content`. Transport failures, 429 and
//! 5xx responses are retried with exponential backoff and jitter.

use std::sync::Mutex;
use std::time::Duration;

use log::{debug, warn};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable that seeds backoff jitter.
pub const SEED_ENV: &str = "PONOS_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    /// Always 0: classification and generation are run greedily.
    pub temperature: u8,
}

/// Something that turns a conversation into the assistant's reply text.
pub trait ChatCompletion: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(10),
        }
    }
}

impl RetryPolicy {
    /// Equal-jitter exponential backoff: half the capped delay plus a uniform
    /// draw over the other half.
    pub fn delay(&self, attempt: u32, rng: &mut impl Rng) -> Duration {
        let exp = self.base_delay.saturating_mul(2u32.saturating_pow(attempt));
        let capped = exp.min(self.max_delay);
        let half = capped / 2;
        let jitter = if half.is_zero() {
            Duration::ZERO
        } else {
            Duration::from_nanos(rng.random_range(0..=half.as_nanos() as u64))
        };
        half + jitter
    }
}

/// Reads [`SEED_ENV`]; `None` when unset or unparseable.
pub fn seed_from_env() -> Option<u64> {
    std::env::var(SEED_ENV).ok().and_then(|s| s.trim().parse().ok())
}

enum Attempt {
    Done(String),
    Retry(String),
    Fail(String),
}

/// Blocking HTTP client for a chat-completions endpoint. Safe to share across threads.
pub struct ChatClient {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    rng: Mutex<StdRng>,
}

impl ChatClient {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        timeout: Duration,
        retry: RetryPolicy,
        seed: Option<u64>,
    ) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let rng = match seed {
            Some(s) => StdRng::seed_from_u64(s),
            None => StdRng::from_os_rng(),
        };
        Self {
            agent,
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            retry,
            rng: Mutex::new(rng),
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn request_body(&self, messages: &[ChatMessage]) -> ChatRequest {
        ChatRequest { model: self.model.clone(), messages: messages.to_vec(), temperature: 0 }
    }

    fn attempt(&self, body: &ChatRequest) -> Attempt {
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("transport: {e}")),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(format!("reading body: {e}")),
        };
        match status {
            200..=299 => match extract_content(&text) {
                Some(content) => Attempt::Done(content),
                None => Attempt::Fail(format!("response lacks choices[0].message.content: {}", snippet(&text))),
            },
            429 | 500..=599 => Attempt::Retry(format!("HTTP {status}: {}", snippet(&text))),
            _ => Attempt::Fail(format!("HTTP {status}: {}", snippet(&text))),
        }
    }
}

impl ChatCompletion for ChatClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let body = self.request_body(messages);
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Attempt::Done(content) => return Ok(content),
                Attempt::Fail(why) => {
                    return Err(Error::BackendUnavailable(format!("{}: {why}", self.endpoint)))
                }
                Attempt::Retry(why) if attempt >= self.retry.max_retries => {
                    return Err(Error::BackendUnavailable(format!(
                        "{}: giving up after {} attempts: {why}",
                        self.endpoint,
                        attempt + 1
                    )))
                }
                Attempt::Retry(why) => {
                    let delay = {
                        let mut rng = self.rng.lock().expect("rng lock");
                        self.retry.delay(attempt, &mut *rng)
                    };
                    warn!("{}: attempt {} failed ({why}); retrying in {delay:?}", self.endpoint, attempt + 1);
                    std::thread::sleep(delay);
                    attempt += 1;
                }
            }
        }
    }
}

fn extract_content(body: &str) -> Option<String> {
    let value: serde_json::Value = serde_json::from_str(body).ok()?;
    let content = value.get("choices")?.get(0)?.get("message")?.get("content")?.as_str()?;
    debug!("model replied with {} bytes", content.len());
    Some(content.to_string())
}

fn snippet(text: &str) -> String {
    text.chars().take(200).collect()
}
