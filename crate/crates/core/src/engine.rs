//! Feedback generation: snapshot the persona, assemble the prompt, call the
//! provider, optionally run the conciseness pass, and build a card.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::clock::{Clock, IdSource, SystemClock, UuidIds};
use crate::history::{CardContext, CardId, FeedbackCard, History, HistoryError, Selection};
use crate::persona::{Persona, PersonaId, PersonaSnapshot};
use crate::prompt::{
    assemble, condense_bundle, default_few_shot, FewShotExample, PromptBundle, PromptError,
    CONDENSE_PROMPT,
};
use crate::provider::{duration_ms, CompletionProvider, GenerationParams, ProviderError};
use crate::text::{self, count_words};

/// Word budget stated in the system prompt.
pub const WORD_LIMIT: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("selected text is empty")]
    EmptySelection,
    #[error("selection {start}..{end} is outside the document ({len} characters)")]
    SelectionOutOfBounds {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("persona {0} not found")]
    PersonaNotFound(PersonaId),
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("feedback text is empty")]
    EmptyFeedback,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    History(#[from] HistoryError),
}

impl From<PromptError> for EngineError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::EmptySelection => EngineError::EmptySelection,
            other => EngineError::InvalidParams(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FeedbackResultRecord")]
pub struct FeedbackResult {
    text: String,
    word_count: usize,
    over_limit: bool,
    #[serde(rename = "latency_ms", with = "duration_ms")]
    latency: Duration,
    condensed: bool,
}

#[derive(Deserialize)]
struct FeedbackResultRecord {
    text: String,
    word_count: usize,
    over_limit: bool,
    latency_ms: u64,
    condensed: bool,
}

impl TryFrom<FeedbackResultRecord> for FeedbackResult {
    type Error = String;

    fn try_from(r: FeedbackResultRecord) -> Result<Self, String> {
        let result = FeedbackResult::new(r.text, Duration::from_millis(r.latency_ms), r.condensed)
            .map_err(|e| e.to_string())?;
        if result.word_count != r.word_count || result.over_limit != r.over_limit {
            return Err(format!(
                "stored word_count {} / over_limit {} disagree with text ({} words)",
                r.word_count, r.over_limit, result.word_count
            ));
        }
        Ok(result)
    }
}

impl FeedbackResult {
    pub fn new(
        text: impl Into<String>,
        latency: Duration,
        condensed: bool,
    ) -> Result<Self, EngineError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(EngineError::EmptyFeedback);
        }
        let word_count = count_words(&text);
        Ok(Self {
            text,
            word_count,
            over_limit: word_count > WORD_LIMIT,
            latency,
            condensed,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn word_count(&self) -> usize {
        self.word_count
    }

    pub fn over_limit(&self) -> bool {
        self.over_limit
    }

    pub fn latency(&self) -> Duration {
        self.latency
    }

    pub fn condensed(&self) -> bool {
        self.condensed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub document_id: String,
    pub persona_id: PersonaId,
    pub selection: Selection,
    pub selected_text: String,
}

impl FeedbackRequest {
    /// Build a request whose `selected_text` is cut from `document_text` at
    /// the given character offsets.
    pub fn from_document(
        document_id: impl Into<String>,
        persona_id: PersonaId,
        document_text: &str,
        selection: Selection,
    ) -> Result<Self, EngineError> {
        if selection.is_empty() {
            return Err(EngineError::EmptySelection);
        }
        let selected_text = selection
            .slice(document_text)
            .ok_or(EngineError::SelectionOutOfBounds {
                start: selection.start,
                end: selection.end,
                len: text::char_len(document_text),
            })?
            .to_string();
        if selected_text.trim().is_empty() {
            return Err(EngineError::EmptySelection);
        }
        Ok(Self {
            document_id: document_id.into(),
            persona_id,
            selection,
            selected_text,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CondenseOutcome {
    pub text: String,
    pub condensed: bool,
    /// Set when the provider failed; `text` is then the original feedback.
    pub error: Option<ProviderError>,
}

pub struct FeedbackEngine {
    provider: Arc<dyn CompletionProvider>,
    few_shot: Arc<Vec<FewShotExample>>,
    condense_prompt: String,
    clock: Arc<dyn Clock>,
    ids: Arc<dyn IdSource>,
}

impl FeedbackEngine {
    /// Engine with the bundled few-shot examples, the system clock and random
    /// card ids.
    pub fn new(provider: Arc<dyn CompletionProvider>) -> Self {
        Self {
            provider,
            few_shot: Arc::new(default_few_shot()),
            condense_prompt: CONDENSE_PROMPT.to_string(),
            clock: Arc::new(SystemClock),
            ids: Arc::new(UuidIds),
        }
    }

    pub fn with_few_shot(mut self, examples: Vec<FewShotExample>) -> Self {
        self.few_shot = Arc::new(examples);
        self
    }

    pub fn with_condense_prompt(mut self, prompt: impl Into<String>) -> Self {
        self.condense_prompt = prompt.into();
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_ids(mut self, ids: Arc<dyn IdSource>) -> Self {
        self.ids = ids;
        self
    }

    pub fn few_shot(&self) -> &[FewShotExample] {
        &self.few_shot
    }

    pub fn clock(&self) -> &dyn Clock {
        self.clock.as_ref()
    }

    pub fn bundle_for(
        &self,
        selected_text: &str,
        persona: &PersonaSnapshot,
    ) -> Result<PromptBundle, EngineError> {
        Ok(assemble(selected_text, persona, &self.few_shot)?)
    }

    async fn call(
        &self,
        bundle: &PromptBundle,
        params: &GenerationParams,
    ) -> Result<String, ProviderError> {
        let reply = tokio::time::timeout(
            params.request_timeout,
            self.provider.complete(bundle, params),
        )
        .await
        .map_err(|_| ProviderError::Timeout(params.request_timeout))??;
        if reply.trim().is_empty() {
            return Err(ProviderError::InvalidResponse("empty completion".into()));
        }
        Ok(reply)
    }

    /// Generate one card. Nothing is stored; on error no card exists.
    pub async fn generate_feedback(
        &self,
        req: &FeedbackRequest,
        persona: &Persona,
        params: &GenerationParams,
        condense_pass: bool,
    ) -> Result<FeedbackCard, EngineError> {
        if persona.id != req.persona_id {
            return Err(EngineError::PersonaNotFound(req.persona_id.clone()));
        }
        params.validate().map_err(EngineError::InvalidParams)?;
        let started = self.clock.now();
        let snapshot = persona.snapshot_at(started);
        let bundle = self.bundle_for(&req.selected_text, &snapshot)?;
        debug!(persona = %persona.id, messages = bundle.len(), "requesting feedback");

        let mut text = self.call(&bundle, params).await?;
        let mut condensed = false;
        if condense_pass {
            let outcome = self.condense(&text, params).await?;
            text = outcome.text;
            condensed = outcome.condensed;
        }

        let finished = self.clock.now();
        let latency = (finished - started).to_std().unwrap_or(Duration::ZERO);
        let feedback = FeedbackResult::new(text, latency, condensed)?;
        Ok(FeedbackCard::new(
            CardId::new(self.ids.next_id()),
            snapshot,
            CardContext {
                document_id: req.document_id.clone(),
                selection: req.selection,
                selected_text: req.selected_text.clone(),
            },
            feedback,
            finished,
        ))
    }

    /// Generate a card and append it to `history`. The history is only touched
    /// when generation succeeded.
    pub async fn generate_into(
        &self,
        history: &mut History,
        req: &FeedbackRequest,
        persona: &Persona,
        params: &GenerationParams,
        condense_pass: bool,
    ) -> Result<FeedbackCard, EngineError> {
        let card = self
            .generate_feedback(req, persona, params, condense_pass)
            .await?;
        history.append(card.clone())?;
        Ok(card)
    }

    /// Second pass asking the model to shorten `feedback`. The rewrite is kept
    /// only if it has strictly fewer words (and is not empty).
    pub async fn condense(
        &self,
        feedback: &str,
        params: &GenerationParams,
    ) -> Result<CondenseOutcome, EngineError> {
        if feedback.trim().is_empty() {
            return Err(EngineError::EmptyFeedback);
        }
        let bundle = condense_bundle(&self.condense_prompt, feedback);
        let keep = |error| CondenseOutcome {
            text: feedback.to_string(),
            condensed: false,
            error,
        };
        match self.call(&bundle, params).await {
            Ok(shorter) if count_words(&shorter) < count_words(feedback) => Ok(CondenseOutcome {
                text: shorter,
                condensed: true,
                error: None,
            }),
            Ok(_) => Ok(keep(None)),
            Err(e) => {
                warn!(error = %e, "condense pass failed, keeping original feedback");
                Ok(keep(Some(e)))
            }
        }
    }
}
