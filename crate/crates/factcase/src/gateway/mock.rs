//! Scripted deterministic backend for tests and offline runs.
//!
//! Scripts match on the request's user text and are consumed in
//! registration order, so a fixed script set makes any pipeline run
//! bit-identical across repetitions. Requests no script matches fail
//! loudly: tests must be exhaustive.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::Deserialize;

use super::{approx_tokens, ChatBackend, ChatRequest, ChatResponse, FinishReason, GatewayError, TokenUsage};

/// How a script recognizes its requests.
#[derive(Debug)]
pub enum Matcher {
    /// Case-sensitive substring of the user text.
    Substring(String),
    Regex(regex::Regex),
    /// Matches every request.
    Any,
}

impl Matcher {
    pub fn substring(s: impl Into<String>) -> Matcher {
        Matcher::Substring(s.into())
    }

    pub fn regex(pattern: &str) -> Result<Matcher, GatewayError> {
        regex::Regex::new(pattern)
            .map(Matcher::Regex)
            .map_err(|e| GatewayError::InvalidRequest(format!("bad script regex: {e}")))
    }

    fn matches(&self, user_text: &str) -> bool {
        match self {
            Matcher::Substring(s) => user_text.contains(s.as_str()),
            Matcher::Regex(re) => re.is_match(user_text),
            Matcher::Any => true,
        }
    }
}

struct Script {
    matcher: Matcher,
    response: String,
    /// Remaining uses; `None` is unlimited.
    remaining: Option<u32>,
}

/// One request the mock served, for call-count and prompt assertions.
#[derive(Debug, Clone)]
pub struct CallRecord {
    pub model_id: String,
    pub system_text: String,
    pub user_text: String,
    pub response_text: String,
}

#[derive(Default)]
struct MockState {
    scripts: Vec<Script>,
    log: Vec<CallRecord>,
}

/// Closed-world scripted chat backend.
#[derive(Default)]
pub struct MockBackend {
    state: Mutex<MockState>,
    calls: AtomicU64,
}

/// On-disk script entry: exactly one of `substring` / `regex` / `any`.
#[derive(Debug, Deserialize)]
pub struct ScriptSpec {
    #[serde(default)]
    pub substring: Option<String>,
    #[serde(default)]
    pub regex: Option<String>,
    #[serde(default)]
    pub any: bool,
    pub response: String,
    #[serde(default)]
    pub times: Option<u32>,
}

impl MockBackend {
    pub fn new() -> Self {
        MockBackend::default()
    }

    /// Register a script; matching requests get `response` until `times`
    /// uses are consumed (`None` = unlimited). Returns the registration
    /// index.
    pub fn script_times(
        &self,
        matcher: Matcher,
        response: impl Into<String>,
        times: Option<u32>,
    ) -> usize {
        let mut state = self.state.lock().expect("mock state poisoned");
        state.scripts.push(Script {
            matcher,
            response: response.into(),
            remaining: times,
        });
        state.scripts.len() - 1
    }

    /// Register an unlimited-use script.
    pub fn script(&self, matcher: Matcher, response: impl Into<String>) -> usize {
        self.script_times(matcher, response, None)
    }

    /// Register a single-use script.
    pub fn script_once(&self, matcher: Matcher, response: impl Into<String>) -> usize {
        self.script_times(matcher, response, Some(1))
    }

    /// Load scripts from a JSON-lines file. Blank lines and `#` comment
    /// lines are skipped.
    pub fn load_scripts(&self, path: &Path) -> Result<usize, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            GatewayError::InvalidRequest(format!("cannot read scripts {}: {e}", path.display()))
        })?;
        let mut loaded = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let spec: ScriptSpec = serde_json::from_str(line).map_err(|e| {
                GatewayError::InvalidRequest(format!(
                    "bad script at {}:{}: {e}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            let matcher = match (&spec.substring, &spec.regex, spec.any) {
                (Some(s), None, false) => Matcher::substring(s),
                (None, Some(r), false) => Matcher::regex(r)?,
                (None, None, true) => Matcher::Any,
                _ => {
                    return Err(GatewayError::InvalidRequest(format!(
                        "script at {}:{} must set exactly one of substring/regex/any",
                        path.display(),
                        lineno + 1
                    )))
                }
            };
            self.script_times(matcher, spec.response, spec.times);
            loaded += 1;
        }
        Ok(loaded)
    }

    /// Every request served so far, in order.
    pub fn call_log(&self) -> Vec<CallRecord> {
        self.state.lock().expect("mock state poisoned").log.clone()
    }

    /// Scripts that still have uses left (unlimited scripts count too).
    pub fn scripts_remaining(&self) -> usize {
        self.state
            .lock()
            .expect("mock state poisoned")
            .scripts
            .iter()
            .filter(|s| s.remaining != Some(0))
            .count()
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let mut state = self.state.lock().expect("mock state poisoned");
        let hit = state
            .scripts
            .iter_mut()
            .find(|s| s.remaining != Some(0) && s.matcher.matches(&request.user_text));
        let response = match hit {
            Some(script) => {
                if let Some(n) = &mut script.remaining {
                    *n -= 1;
                }
                script.response.clone()
            }
            None => {
                return Err(GatewayError::Unmatched(preview(&request.user_text)));
            }
        };
        self.calls.fetch_add(1, Ordering::Relaxed);
        state.log.push(CallRecord {
            model_id: request.model_id.clone(),
            system_text: request.system_text.clone(),
            user_text: request.user_text.clone(),
            response_text: response.clone(),
        });
        let usage = TokenUsage {
            prompt_tokens: approx_tokens(&request.system_text) + approx_tokens(&request.user_text),
            completion_tokens: approx_tokens(&response),
        };
        Ok(ChatResponse {
            text: response,
            finish_reason: FinishReason::Stop,
            usage,
        })
    }

    fn calls_made(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

fn preview(text: &str) -> String {
    const LIMIT: usize = 600;
    if text.chars().count() <= LIMIT {
        text.to_string()
    } else {
        let head: String = text.chars().take(LIMIT).collect();
        format!("{head}... ({} chars total)", text.chars().count())
    }
}
