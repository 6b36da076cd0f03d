//! Completion providers.
//!
//! [`CompletionProvider`] is the only thing the feedback engine knows about a
//! language model. Implementations here:
//!
//! * [`RemoteProvider`] speaks the chat-completion protocol of any
//!   OpenAI-compatible endpoint.
//! * [`MockProvider`] answers offline from a fixed template, deterministically.
//! * [`FnProvider`] wraps a closure, for tests that need a scripted answer.
//! * [`AuditingProvider`] wraps another provider and appends every exchange to
//!   a JSON-lines audit file.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::debug;

use crate::clock::now_ms;
use crate::persona::SectionKind;
use crate::prompt::{parse_user_message, PromptBundle, Role, SYSTEM_PROMPT};

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum ProviderError {
    #[error("provider did not answer within {0:?}")]
    Timeout(Duration),
    #[error("provider rejected credentials: {0}")]
    Auth(String),
    #[error("provider rate limit hit: {0}")]
    RateLimited(String),
    #[error("provider returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unusable provider response: {0}")]
    InvalidResponse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model_id: String,
    pub temperature: f32,
    pub max_output_tokens: u32,
    #[serde(with = "duration_ms")]
    pub request_timeout: Duration,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            model_id: "gpt-3.5-turbo".into(),
            temperature: 0.7,
            max_output_tokens: 512,
            request_timeout: Duration::from_secs(60),
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.max_output_tokens == 0 {
            return Err("max_output_tokens must be at least 1".into());
        }
        if self.model_id.trim().is_empty() {
            return Err("model_id must not be empty".into());
        }
        Ok(())
    }
}

pub(crate) mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

#[async_trait]
pub trait CompletionProvider: Send + Sync {
    async fn complete(
        &self,
        bundle: &PromptBundle,
        params: &GenerationParams,
    ) -> Result<String, ProviderError>;
}

// ---------------------------------------------------------------------------
// Mock
// ---------------------------------------------------------------------------

const CLOSINGS: [&str; 4] = [
    "is a solid starting point",
    "has a clear core idea",
    "would benefit from one more revision pass",
    "addresses its topic well but could be sharpened",
];

/// Deterministic offline provider.
///
/// For a feedback bundle (system message equal to [`SYSTEM_PROMPT`]) it reads
/// the final user message back and answers
///
/// ```text
/// As a {RoleTask descriptions joined by ", " | "reader"}[ with a background as
/// {Background descriptions joined by ", "}], I read the passage beginning
/// "{first six words}". {suggestion} Overall, the text snippet {closing}.
/// ```
///
/// where `suggestion` is `Regarding {attr}, I would prefer the text to be
/// {desc}.` for the first Style pair, or `I would suggest adding a concrete
/// example to support the main point.` without one. `closing` is picked from a
/// fixed list by the first byte of the SHA-256 of the bundle bytes.
///
/// Any other bundle is treated as a conciseness request: the reply is the first
/// `max(1, n / 2)` whitespace-separated words of the last user message.
#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    delay: Option<Duration>,
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sleep before answering; used to exercise timeouts.
    pub fn with_delay(delay: Duration) -> Self {
        Self { delay: Some(delay) }
    }

    pub fn respond(bundle: &PromptBundle) -> Result<String, ProviderError> {
        let last = bundle.last_user().ok_or_else(|| {
            ProviderError::InvalidResponse("bundle has no final user message".into())
        })?;
        if bundle.system() == Some(SYSTEM_PROMPT) {
            Self::feedback(bundle, last)
        } else {
            Ok(Self::halve(last))
        }
    }

    fn feedback(bundle: &PromptBundle, last: &str) -> Result<String, ProviderError> {
        let input =
            parse_user_message(last).map_err(|e| ProviderError::InvalidResponse(e.to_string()))?;
        let descriptions = |kind| {
            input
                .section(kind)
                .iter()
                .map(|p| p.description.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        };

        let roles = descriptions(SectionKind::RoleTask);
        let mut out = format!("As a {}", if roles.is_empty() { "reader" } else { &roles });
        let background = descriptions(SectionKind::Background);
        if !background.is_empty() {
            out.push_str(" with a background as ");
            out.push_str(&background);
        }
        let opening: Vec<&str> = input.selected_text.split_whitespace().take(6).collect();
        out.push_str(&format!(
            ", I read the passage beginning \"{}\". ",
            opening.join(" ")
        ));

        match input.section(SectionKind::StylePreferences).first() {
            Some(p) => out.push_str(&format!(
                "Regarding {}, I would prefer the text to be {}. ",
                p.attribute, p.description
            )),
            None => out
                .push_str("I would suggest adding a concrete example to support the main point. "),
        }

        let digest = Sha256::digest(bundle.to_bytes());
        let closing = CLOSINGS[digest[0] as usize % CLOSINGS.len()];
        out.push_str(&format!("Overall, the text snippet {closing}."));
        Ok(out)
    }

    fn halve(text: &str) -> String {
        let words: Vec<&str> = text.split_whitespace().collect();
        let keep = (words.len() / 2).max(1);
        words[..keep.min(words.len())].join(" ")
    }
}

#[async_trait]
impl CompletionProvider for MockProvider {
    async fn complete(
        &self,
        bundle: &PromptBundle,
        _params: &GenerationParams,
    ) -> Result<String, ProviderError> {
        if let Some(d) = self.delay {
            tokio::time::sleep(d).await;
        }
        Self::respond(bundle)
    }
}

/// Provider backed by a closure.
pub struct FnProvider<F>(pub F);

#[async_trait]
impl<F> CompletionProvider for FnProvider<F>
where
    F: Fn(&PromptBundle) -> Result<String, ProviderError> + Send + Sync,
{
    async fn complete(
        &self,
        bundle: &PromptBundle,
        _params: &GenerationParams,
    ) -> Result<String, ProviderError> {
        (self.0)(bundle)
    }
}

// ---------------------------------------------------------------------------
// OpenAI-compatible remote endpoint
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [crate::prompt::Message],
    temperature: f32,
    max_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct RemoteProvider {
    base_url: String,
    api_key: Option<String>,
    client: reqwest::Client,
}

impl RemoteProvider {
    /// `base_url` is the API root, e.g. `https://api.openai.com/v1`;
    /// requests go to `{base_url}/chat/completions`.
    pub fn new(base_url: &str, api_key: Option<String>) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            client: reqwest::Client::new(),
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }
}

#[async_trait]
impl CompletionProvider for RemoteProvider {
    async fn complete(
        &self,
        bundle: &PromptBundle,
        params: &GenerationParams,
    ) -> Result<String, ProviderError> {
        let body = ChatRequest {
            model: &params.model_id,
            messages: &bundle.messages,
            temperature: params.temperature,
            max_tokens: params.max_output_tokens,
        };
        let mut req = self
            .client
            .post(self.endpoint())
            .timeout(params.request_timeout)
            .json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        debug!(endpoint = %self.endpoint(), messages = bundle.len(), "chat completion request");

        let resp = req.send().await.map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout(params.request_timeout)
            } else {
                ProviderError::Transport(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let text = resp.text().await.map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout(params.request_timeout)
            } else {
                ProviderError::Transport(e.to_string())
            }
        })?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(ProviderError::Auth(text)),
            429 => return Err(ProviderError::RateLimited(text)),
            _ => return Err(ProviderError::Status { status, body: text }),
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| ProviderError::InvalidResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .filter(|c| !c.trim().is_empty())
            .ok_or_else(|| ProviderError::InvalidResponse("no completion content".into()))
    }
}

// ---------------------------------------------------------------------------
// Audit log
// ---------------------------------------------------------------------------

pub struct AuditingProvider<P> {
    inner: P,
    file: Mutex<File>,
    secrets: Vec<String>,
}

impl<P: CompletionProvider> AuditingProvider<P> {
    /// Every occurrence of a string in `secrets` is replaced by `[REDACTED]`
    /// before a record is written.
    pub fn open(inner: P, path: &Path, secrets: Vec<String>) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            inner,
            file: Mutex::new(file),
            secrets: secrets.into_iter().filter(|s| !s.is_empty()).collect(),
        })
    }

    fn write_record(&self, record: serde_json::Value) {
        let mut line = record.to_string();
        for s in &self.secrets {
            line = line.replace(s.as_str(), "[REDACTED]");
        }
        line.push('\n');
        let mut file = self.file.lock().expect("audit file lock");
        if let Err(e) = file.write_all(line.as_bytes()) {
            tracing::warn!(error = %e, "failed to write audit record");
        }
    }
}

#[async_trait]
impl<P: CompletionProvider> CompletionProvider for AuditingProvider<P> {
    async fn complete(
        &self,
        bundle: &PromptBundle,
        params: &GenerationParams,
    ) -> Result<String, ProviderError> {
        let result = self.inner.complete(bundle, params).await;
        let outcome = match &result {
            Ok(text) => json!({ "ok": text }),
            Err(e) => json!({ "error": e }),
        };
        self.write_record(json!({
            "timestamp": now_ms(),
            "model": params.model_id,
            "messages": bundle.messages.iter().map(|m| json!({
                "role": m.role,
                "content": m.content,
            })).collect::<Vec<_>>(),
            "system_is_default": bundle.messages.first().map(|m| m.role == Role::System && m.content == SYSTEM_PROMPT),
            "outcome": outcome,
        }));
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::from_millis;
    use crate::persona::{AttributePair, Persona, PersonaId};
    use crate::prompt::{assemble, condense_bundle, CONDENSE_PROMPT};

    fn persona() -> Persona {
        let mut p = Persona::with_id(PersonaId::new("p"), "Reviewer", from_millis(0));
        p.sections
            .role_task
            .push(AttributePair::new("role", "reviewer"));
        p.sections
            .background
            .push(AttributePair::new("occupation", "CS professor"));
        p.sections
            .style_preferences
            .push(AttributePair::new("writing style", "formal"));
        p
    }

    #[test]
    fn mock_follows_documented_template() {
        let snap = persona().snapshot_at(from_millis(0));
        let bundle = assemble("Lorem ipsum dolor sit amet", &snap, &[]).unwrap();
        let text = MockProvider::respond(&bundle).unwrap();
        let digest = Sha256::digest(bundle.to_bytes());
        let expected = format!(
            "As a reviewer with a background as CS professor, I read the passage beginning \
             \"Lorem ipsum dolor sit amet\". Regarding writing style, I would prefer the text \
             to be formal. Overall, the text snippet {}.",
            CLOSINGS[digest[0] as usize % 4]
        );
        assert_eq!(text, expected);
    }

    #[test]
    fn mock_without_sections_uses_defaults() {
        let snap =
            Persona::with_id(PersonaId::new("p"), "", from_millis(0)).snapshot_at(from_millis(0));
        let bundle = assemble("one two", &snap, &[]).unwrap();
        let text = MockProvider::respond(&bundle).unwrap();
        assert!(text.starts_with("As a reader, I read the passage beginning \"one two\"."));
        assert!(text.contains("concrete example"));
    }

    #[test]
    fn mock_halves_condense_requests() {
        let feedback = vec!["w"; 300].join(" ");
        let out = MockProvider::respond(&condense_bundle(CONDENSE_PROMPT, &feedback)).unwrap();
        assert_eq!(out.split_whitespace().count(), 150);
        let one = MockProvider::respond(&condense_bundle(CONDENSE_PROMPT, "single")).unwrap();
        assert_eq!(one, "single");
    }

    #[test]
    fn params_validation() {
        assert!(GenerationParams::default().validate().is_ok());
        let mut p = GenerationParams {
            temperature: 2.5,
            ..GenerationParams::default()
        };
        assert!(p.validate().is_err());
        p.temperature = 0.0;
        p.max_output_tokens = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn params_serialize_timeout_as_millis() {
        let v = serde_json::to_value(GenerationParams::default()).unwrap();
        assert_eq!(v["request_timeout"], 60_000);
    }

    #[tokio::test]
    async fn audit_log_redacts_secrets() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        let provider = AuditingProvider::open(
            FnProvider(|_: &PromptBundle| Ok("reply with sk-secret inside".to_string())),
            &path,
            vec!["sk-secret".into()],
        )
        .unwrap();
        let bundle = condense_bundle(CONDENSE_PROMPT, "text");
        provider
            .complete(&bundle, &GenerationParams::default())
            .await
            .unwrap();
        let log = std::fs::read_to_string(&path).unwrap();
        assert_eq!(log.lines().count(), 1);
        assert!(!log.contains("sk-secret"));
        assert!(log.contains("[REDACTED]"));
    }
}
