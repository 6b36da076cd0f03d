//! Service configuration: TOML file, then CLI flags, then the API key from the
//! environment.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use persona_feedback_core::history::DEFAULT_PREVIEW_SENTENCES;
use persona_feedback_core::GenerationParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Remote,
    #[default]
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// API root of an OpenAI-compatible endpoint, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen: String,
    pub port: u16,
    pub provider: ProviderKind,
    pub remote: Option<RemoteConfig>,
    pub generation: GenerationParams,
    pub data_dir: PathBuf,
    pub condense: bool,
    pub condense_prompt: Option<String>,
    pub few_shot: Option<PathBuf>,
    pub preview_sentences: usize,
    pub max_in_flight: usize,
    /// Shared bearer token; when set every route except `/health` requires it.
    pub auth_token: Option<String>,
    /// JSON-lines file receiving every provider exchange.
    pub audit_log: Option<PathBuf>,
    /// Answer feedback requests with the assembled prompt instead of calling
    /// the provider.
    pub dump_prompt: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1".into(),
            port: 8080,
            provider: ProviderKind::Mock,
            remote: None,
            generation: GenerationParams::default(),
            data_dir: PathBuf::from("data"),
            condense: false,
            condense_prompt: None,
            few_shot: None,
            preview_sentences: DEFAULT_PREVIEW_SENTENCES,
            max_in_flight: 4,
            auth_token: None,
            audit_log: None,
            dump_prompt: false,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).context("parsing service configuration")
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text)
    }

    /// API key for the remote provider, read from the configured variable.
    pub fn api_key(&self) -> Option<String> {
        let remote = self.remote.as_ref()?;
        std::env::var(&remote.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.generation
            .validate()
            .map_err(|e| anyhow::anyhow!("generation defaults: {e}"))?;
        if self.max_in_flight == 0 {
            bail!("max_in_flight must be at least 1");
        }
        if self.preview_sentences == 0 {
            bail!("preview_sentences must be at least 1");
        }
        if self.provider == ProviderKind::Remote {
            let Some(remote) = &self.remote else {
                bail!("provider = \"remote\" needs a [remote] section");
            };
            if remote.base_url.trim().is_empty() {
                bail!("remote.base_url must not be empty");
            }
            if self.api_key().is_none() {
                bail!("environment variable {} is not set", remote.api_key_env);
            }
        }
        std::fs::create_dir_all(&self.data_dir)
            .with_context(|| format!("creating data directory {}", self.data_dir.display()))?;
        tempfile::NamedTempFile::new_in(&self.data_dir).with_context(|| {
            format!("data directory {} is not writable", self.data_dir.display())
        })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_partial_toml_with_defaults() {
        let cfg = ServiceConfig::from_toml(
            r#"
            port = 9000
            provider = "remote"
            condense = true

            [remote]
            base_url = "http://localhost:1234/v1"

            [generation]
            model_id = "local-model"
            temperature = 0.2
            max_output_tokens = 300
            request_timeout = 5000
            "#,
        )
        .unwrap();
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.provider, ProviderKind::Remote);
        assert!(cfg.condense);
        assert_eq!(cfg.remote.unwrap().api_key_env, "OPENAI_API_KEY");
        assert_eq!(cfg.generation.model_id, "local-model");
        assert_eq!(cfg.generation.request_timeout.as_millis(), 5000);
        assert_eq!(cfg.preview_sentences, 3);
    }

    #[test]
    fn remote_without_section_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ServiceConfig {
            provider: ProviderKind::Remote,
            data_dir: dir.path().into(),
            ..ServiceConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn remote_without_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ServiceConfig {
            provider: ProviderKind::Remote,
            remote: Some(RemoteConfig {
                base_url: "http://localhost/v1".into(),
                api_key_env: "PERSONA_FEEDBACK_TEST_UNSET_KEY".into(),
            }),
            data_dir: dir.path().into(),
            ..ServiceConfig::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("PERSONA_FEEDBACK_TEST_UNSET_KEY"), "{err}");
    }

    #[test]
    fn mock_defaults_validate() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ServiceConfig {
            data_dir: dir.path().join("nested"),
            ..ServiceConfig::default()
        };
        cfg.validate().unwrap();
        assert!(dir.path().join("nested").is_dir());
    }
}
