//! REST backend speaking the chat-completions wire shape.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, ChatResponse, FinishReason, GatewayError, TokenUsage};

/// Connection settings for a hosted or locally served model.
#[derive(Debug, Clone)]
pub struct BackendConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint_url: String,
    /// Bearer token, injected from the environment. Never serialized.
    pub api_key: Option<String>,
    pub model_id: String,
    pub timeout: Duration,
    /// Retries after the first attempt; total attempts = max_retries + 1.
    pub max_retries: u32,
    /// First backoff delay; doubles per retry.
    pub backoff: Duration,
    /// Pin sampling parameters for reproducible live runs; `None` keeps the
    /// backend defaults.
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub rate_limit: Option<RateLimit>,
}

impl BackendConfig {
    pub fn new(endpoint_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        BackendConfig {
            endpoint_url: endpoint_url.into(),
            api_key: None,
            model_id: model_id.into(),
            timeout: Duration::from_secs(60),
            max_retries: 2,
            backoff: Duration::from_millis(250),
            temperature: None,
            top_p: None,
            rate_limit: None,
        }
    }
}

/// Token-bucket request throttle.
#[derive(Debug, Clone, Copy)]
pub struct RateLimit {
    /// Maximum burst size.
    pub capacity: u32,
    /// Sustained requests per second.
    pub refill_per_sec: f64,
}

struct TokenBucket {
    capacity: f64,
    tokens: f64,
    refill_per_sec: f64,
    last_refill: Instant,
}

impl TokenBucket {
    fn new(limit: RateLimit) -> Self {
        TokenBucket {
            capacity: limit.capacity as f64,
            tokens: limit.capacity as f64,
            refill_per_sec: limit.refill_per_sec,
            last_refill: Instant::now(),
        }
    }

    /// Seconds to wait before a token is available; takes the token when
    /// one is free.
    fn try_acquire(&mut self) -> Option<Duration> {
        let now = Instant::now();
        let elapsed = now.duration_since(self.last_refill).as_secs_f64();
        self.tokens = (self.tokens + elapsed * self.refill_per_sec).min(self.capacity);
        self.last_refill = now;
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            None
        } else {
            Some(Duration::from_secs_f64(
                (1.0 - self.tokens) / self.refill_per_sec,
            ))
        }
    }
}

/// Chat backend speaking the standard chat-completions REST protocol.
pub struct HttpBackend {
    config: BackendConfig,
    agent: ureq::Agent,
    calls: AtomicU64,
    bucket: Option<Mutex<TokenBucket>>,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_p: Option<f64>,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireContent,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireContent {
    #[serde(default)]
    content: String,
}

#[derive(Deserialize, Default)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        let bucket = config.rate_limit.map(|l| Mutex::new(TokenBucket::new(l)));
        HttpBackend {
            config,
            agent,
            calls: AtomicU64::new(0),
            bucket,
        }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn throttle(&self) {
        if let Some(bucket) = &self.bucket {
            loop {
                let wait = bucket.lock().expect("token bucket poisoned").try_acquire();
                match wait {
                    None => return,
                    Some(d) => std::thread::sleep(d),
                }
            }
        }
    }

    fn dispatch_once(&self, request: &ChatRequest) -> Result<ChatResponse, AttemptError> {
        let body = WireRequest {
            model: &request.model_id,
            messages: vec![
                WireMessage {
                    role: "system",
                    content: &request.system_text,
                },
                WireMessage {
                    role: "user",
                    content: &request.user_text,
                },
            ],
            temperature: request.temperature.or(self.config.temperature),
            top_p: request.top_p.or(self.config.top_p),
            max_tokens: request.max_tokens,
        };

        let mut req = self.agent.post(&self.config.endpoint_url);
        if let Some(key) = &self.config.api_key {
            req = req.header("authorization", &format!("Bearer {key}"));
        }
        let mut response = req
            .send_json(&body)
            .map_err(|e| AttemptError::Transport(e.to_string()))?;

        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let text = response
                .body_mut()
                .read_to_string()
                .unwrap_or_default();
            return Err(AttemptError::Status(status, truncate_for_log(&text)));
        }

        let wire: WireResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| AttemptError::Fatal(GatewayError::BadResponse(e.to_string())))?;
        let choice = wire.choices.into_iter().next().ok_or_else(|| {
            AttemptError::Fatal(GatewayError::BadResponse("response has no choices".into()))
        })?;
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::Length,
            Some("stop") | None => FinishReason::Stop,
            Some(_) => FinishReason::Error,
        };
        let usage = wire.usage.unwrap_or_default();
        Ok(ChatResponse {
            text: choice.message.content,
            finish_reason,
            usage: TokenUsage {
                prompt_tokens: usage.prompt_tokens,
                completion_tokens: usage.completion_tokens,
            },
        })
    }
}

enum AttemptError {
    /// Network or timeout failure; retryable.
    Transport(String),
    /// Non-2xx. 5xx and 429 are retryable, the rest are not.
    Status(u16, String),
    /// Not retryable.
    Fatal(GatewayError),
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let max_attempts = self.config.max_retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.throttle();
            self.calls.fetch_add(1, Ordering::Relaxed);
            let err = match self.dispatch_once(request) {
                Ok(resp) => return Ok(resp),
                Err(e) => e,
            };
            let retryable = match &err {
                AttemptError::Transport(_) => true,
                AttemptError::Status(status, _) => *status >= 500 || *status == 429,
                AttemptError::Fatal(_) => false,
            };
            if !retryable || attempt >= max_attempts {
                return Err(match err {
                    AttemptError::Transport(message) => GatewayError::Transport {
                        attempts: attempt,
                        message,
                    },
                    AttemptError::Status(status, message) => GatewayError::Backend {
                        status,
                        attempts: attempt,
                        message,
                    },
                    AttemptError::Fatal(e) => e,
                });
            }
            let delay = self.config.backoff * 2u32.pow(attempt - 1);
            std::thread::sleep(delay);
        }
    }

    fn calls_made(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

fn truncate_for_log(text: &str) -> String {
    const LIMIT: usize = 400;
    if text.chars().count() <= LIMIT {
        text.to_string()
    } else {
        let cut: String = text.chars().take(LIMIT).collect();
        format!("{cut}... ({} chars total)", text.chars().count())
    }
}
