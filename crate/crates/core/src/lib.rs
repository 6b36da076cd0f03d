//! On-demand writing feedback from writer-defined reader personas.
//!
//! * [`persona`]: personas, their four attribute sections and snapshots.
//! * [`prompt`]: turns a persona snapshot and a text selection into the chat
//!   message sequence sent to a model.
//! * [`provider`]: the completion provider abstraction, a deterministic mock
//!   and an OpenAI-compatible client.
//! * [`engine`]: generation of feedback cards, including the optional
//!   conciseness pass.
//! * [`history`]: newest-first feedback card history per document.
//! * [`analytics`]: session event log and derived workflow metrics.
//! * [`structure`]: rule-based segmentation and labeling of feedback texts.

pub mod analytics;
pub mod clock;
pub mod engine;
pub mod history;
pub mod persona;
pub mod prompt;
pub mod provider;
pub mod structure;
pub mod text;

pub use analytics::{
    attribute_contribution, compute_stats, focus_timeline, AttributeContribution, EventKind,
    FocusTimeline, SessionEvent, SessionLog, SessionStats, SnapshotIndex,
};
pub use engine::{FeedbackEngine, FeedbackRequest, FeedbackResult, WORD_LIMIT};
pub use history::{CardContext, CardId, FeedbackCard, History, Selection};
pub use persona::{AttributePair, Persona, PersonaEdit, PersonaId, PersonaSnapshot, SectionKind};
pub use prompt::{assemble, FewShotExample, Message, PromptBundle, Role};
pub use provider::{
    CompletionProvider, GenerationParams, MockProvider, ProviderError, RemoteProvider,
};
pub use structure::{analyze_corpus, label_main, segment, FeedbackBlocks, MainLabel};
pub use text::count_words;
