//! Engine configuration: one TOML file wiring backend, templates,
//! embedding provider, paths, and run parameters together.
//!
//! Secrets never live in the file; the backend section names an
//! environment variable holding the API key.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;

use crate::agents::{AgentPolicy, Agents};
use crate::deploy::AblationConfig;
use crate::gateway::{BackendConfig, ChatBackend, HttpBackend, MockBackend, RateLimit};
use crate::kb::{EmbeddingProvider, HashedBagProvider, HttpEmbeddingProvider};
use crate::prompt::{TemplateSet, DEFAULT_EVIDENCE_CHAR_BUDGET};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub backend: BackendSection,
    #[serde(default)]
    pub templates: TemplatesSection,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    #[serde(default)]
    pub engine: EngineSection,
    pub paths: PathsSection,
    #[serde(default)]
    pub ablation: AblationConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    /// "http" for a live endpoint, "mock" for a scripted backend.
    #[serde(rename = "type")]
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default = "default_model_id")]
    pub model_id: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub top_p: Option<f64>,
    /// Token-bucket throttle: burst size and sustained requests/second.
    #[serde(default)]
    pub rate_limit_burst: Option<u32>,
    #[serde(default)]
    pub rate_limit_per_sec: Option<f64>,
    /// Script file for the mock backend (JSONL).
    #[serde(default)]
    pub scripts: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

fn default_model_id() -> String {
    "mock-model".into()
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_max_retries() -> u32 {
    2
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatesSection {
    /// Directory of `<role>.tmpl` overrides; builtin templates otherwise.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub evidence_char_budget: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSection {
    #[serde(default)]
    pub provider: EmbeddingKind,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub model_id: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            provider: EmbeddingKind::Hashed,
            dimension: default_dimension(),
            endpoint_url: None,
            model_id: None,
            timeout_ms: default_timeout_ms(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    #[default]
    Hashed,
    Http,
}

fn default_dimension() -> usize {
    256
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_max_reasks")]
    pub max_reasks: u32,
    #[serde(default = "default_true")]
    pub enforce_special_label: bool,
}

impl Default for EngineSection {
    fn default() -> Self {
        EngineSection {
            workers: 1,
            max_reasks: default_max_reasks(),
            enforce_special_label: true,
        }
    }
}

fn default_workers() -> usize {
    1
}

fn default_max_reasks() -> u32 {
    2
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub store: PathBuf,
    pub traces: PathBuf,
    pub reports: PathBuf,
}

impl EngineConfig {
    /// Read a config file; relative paths inside resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<EngineConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        let mut config: EngineConfig = toml::from_str(&text)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            config.resolve_paths(dir);
        }
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&p);
            }
        };
        resolve(&mut self.paths.store);
        resolve(&mut self.paths.traces);
        resolve(&mut self.paths.reports);
        if let Some(scripts) = &mut self.backend.scripts {
            resolve(scripts);
        }
        if let Some(templates) = &mut self.templates.dir {
            resolve(templates);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.backend.kind {
            BackendKind::Http => {
                if self.backend.endpoint_url.is_none() {
                    return Err(ConfigError::Invalid(
                        "backend.type = \"http\" requires backend.endpoint_url".into(),
                    ));
                }
            }
            BackendKind::Mock => {
                if self.backend.scripts.is_none() {
                    return Err(ConfigError::Invalid(
                        "backend.type = \"mock\" requires backend.scripts".into(),
                    ));
                }
            }
        }
        if self.embedding.provider == EmbeddingKind::Http
            && (self.embedding.endpoint_url.is_none() || self.embedding.model_id.is_none())
        {
            return Err(ConfigError::Invalid(
                "embedding.provider = \"http\" requires endpoint_url and model_id".into(),
            ));
        }
        if self.embedding.dimension == 0 {
            return Err(ConfigError::Invalid(
                "embedding.dimension must be positive".into(),
            ));
        }
        if self.engine.workers == 0 {
            return Err(ConfigError::Invalid("engine.workers must be >= 1".into()));
        }
        Ok(())
    }

    pub fn build_backend(&self) -> Result<Arc<dyn ChatBackend>, ConfigError> {
        match self.backend.kind {
            BackendKind::Mock => {
                let mock = MockBackend::new();
                let scripts = self.backend.scripts.as_ref().expect("validated");
                mock.load_scripts(scripts)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Ok(Arc::new(mock))
            }
            BackendKind::Http => {
                let mut backend = BackendConfig::new(
                    self.backend.endpoint_url.clone().expect("validated"),
                    self.backend.model_id.clone(),
                );
                backend.timeout = Duration::from_millis(self.backend.timeout_ms);
                backend.max_retries = self.backend.max_retries;
                backend.temperature = self.backend.temperature;
                backend.top_p = self.backend.top_p;
                if let Some(env_name) = &self.backend.api_key_env {
                    backend.api_key = match std::env::var(env_name) {
                        Ok(key) if !key.is_empty() => Some(key),
                        _ => {
                            return Err(ConfigError::Invalid(format!(
                                "api key environment variable {env_name} is unset or empty"
                            )))
                        }
                    };
                }
                if let (Some(burst), Some(per_sec)) = (
                    self.backend.rate_limit_burst,
                    self.backend.rate_limit_per_sec,
                ) {
                    backend.rate_limit = Some(RateLimit {
                        capacity: burst,
                        refill_per_sec: per_sec,
                    });
                }
                Ok(Arc::new(HttpBackend::new(backend)))
            }
        }
    }

    pub fn build_templates(&self) -> Result<Arc<TemplateSet>, ConfigError> {
        let set = match &self.templates.dir {
            Some(dir) => TemplateSet::load_dir(dir)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?,
            None => TemplateSet::builtin(),
        };
        let budget = self
            .templates
            .evidence_char_budget
            .unwrap_or(DEFAULT_EVIDENCE_CHAR_BUDGET);
        Ok(Arc::new(set.with_evidence_char_budget(budget)))
    }

    pub fn build_provider(&self) -> Result<Box<dyn EmbeddingProvider>, ConfigError> {
        match self.embedding.provider {
            EmbeddingKind::Hashed => Ok(Box::new(HashedBagProvider::new(self.embedding.dimension))),
            EmbeddingKind::Http => Ok(Box::new(HttpEmbeddingProvider::new(
                self.embedding.endpoint_url.clone().expect("validated"),
                self.embedding.model_id.clone().expect("validated"),
                self.embedding.dimension,
                Duration::from_millis(self.embedding.timeout_ms),
            ))),
        }
    }

    pub fn build_agents(&self) -> Result<Agents, ConfigError> {
        let backend = self.build_backend()?;
        let templates = self.build_templates()?;
        Ok(
            Agents::new(backend, templates, self.backend.model_id.clone()).with_policy(
                AgentPolicy {
                    max_reasks: self.engine.max_reasks,
                    enforce_special_label: self.engine.enforce_special_label,
                },
            ),
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[backend]
type = "mock"
scripts = "scripts.jsonl"

[paths]
store = "kb.jsonl"
traces = "traces.jsonl"
reports = "reports"
"#;

    #[test]
    fn minimal_mock_config_loads_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("engine.toml");
        std::fs::write(&path, MINIMAL).unwrap();
        std::fs::write(dir.path().join("scripts.jsonl"), "").unwrap();
        let config = EngineConfig::load(&path).unwrap();
        assert_eq!(config.engine.workers, 1);
        assert_eq!(config.engine.max_reasks, 2);
        assert_eq!(config.ablation.n_cases, 1);
        assert_eq!(config.embedding.dimension, 256);
        // Paths resolved against the config directory.
        assert!(config.paths.store.starts_with(dir.path()));
        config.build_agents().unwrap();
        config.build_provider().unwrap();
    }

    #[test]
    fn http_backend_requires_endpoint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("engine.toml");
        std::fs::write(
            &path,
            "[backend]\ntype = \"http\"\n\n[paths]\nstore = \"s\"\ntraces = \"t\"\nreports = \"r\"\n",
        )
        .unwrap();
        assert!(EngineConfig::load(&path).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("engine.toml");
        std::fs::write(&path, format!("{MINIMAL}\n[backend.extra]\nx = 1\n")).unwrap();
        assert!(EngineConfig::load(&path).is_err());
    }

    #[test]
    fn missing_api_key_env_fails_loudly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("engine.toml");
        std::fs::write(
            &path,
            "[backend]\ntype = \"http\"\nendpoint_url = \"http://localhost:9\"\napi_key_env = \"FACTCASE_TEST_KEY_UNSET\"\n\n[paths]\nstore = \"s\"\ntraces = \"t\"\nreports = \"r\"\n",
        )
        .unwrap();
        let config = EngineConfig::load(&path).unwrap();
        assert!(config.build_backend().is_err());
    }
}
