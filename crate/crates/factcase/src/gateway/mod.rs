//! Uniform chat-completion access to any model backend.
//!
//! Every agent call in the pipeline goes through [`ChatBackend::complete`].
//! Two implementations ship here: [`HttpBackend`] speaking the de-facto
//! chat-completions REST shape, and [`MockBackend`], a fully scripted
//! deterministic backend that all tests run against.

mod http;
mod mock;

pub use http::{BackendConfig, HttpBackend, RateLimit};
pub use mock::{CallRecord, Matcher, MockBackend, ScriptSpec};

use serde::{Deserialize, Serialize};

/// Hard cap on generation length; requests above it are rejected before
/// dispatch.
pub const MAX_GENERATION_TOKENS: u32 = 2048;

/// One chat-completion request: a system message plus a user message.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub system_text: String,
    pub user_text: String,
    /// `None` keeps the backend's default.
    pub temperature: Option<f64>,
    /// `None` keeps the backend's default.
    pub top_p: Option<f64>,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(
        model_id: impl Into<String>,
        system_text: impl Into<String>,
        user_text: impl Into<String>,
    ) -> Self {
        ChatRequest {
            model_id: model_id.into(),
            system_text: system_text.into(),
            user_text: user_text.into(),
            temperature: None,
            top_p: None,
            max_tokens: MAX_GENERATION_TOKENS,
        }
    }

    /// Reject malformed requests before they reach any backend.
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.system_text.is_empty() || self.user_text.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "system and user texts must be nonempty".into(),
            ));
        }
        if self.max_tokens == 0 || self.max_tokens > MAX_GENERATION_TOKENS {
            return Err(GatewayError::InvalidRequest(format!(
                "max_tokens must be in 1..={MAX_GENERATION_TOKENS}, got {}",
                self.max_tokens
            )));
        }
        if let Some(t) = self.temperature {
            if !t.is_finite() || t < 0.0 {
                return Err(GatewayError::InvalidRequest(format!(
                    "temperature must be >= 0, got {t}"
                )));
            }
        }
        if let Some(p) = self.top_p {
            if !p.is_finite() || p <= 0.0 || p > 1.0 {
                return Err(GatewayError::InvalidRequest(format!(
                    "top_p must be in (0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Why the model stopped generating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    /// The generation hit the token cap; the text is likely truncated.
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

/// A completed chat response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: TokenUsage,
}

/// A chat-completion backend. Stateless per request and safe to share
/// across worker threads.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;

    /// Total requests served so far, for call-count assertions and
    /// per-sample cost accounting.
    fn calls_made(&self) -> u64;
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend returned status {status} after {attempts} attempts: {message}")]
    Backend {
        status: u16,
        attempts: u32,
        message: String,
    },
    #[error("no scripted response matches request: {0}")]
    Unmatched(String),
    #[error("malformed backend response: {0}")]
    BadResponse(String),
}

/// Crude whitespace token count used by the mock's usage accounting.
pub(crate) fn approx_tokens(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}
