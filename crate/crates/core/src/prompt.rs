//! Prompt assembly.
//!
//! A request becomes an ordered chat message list:
//!
//! ```text
//! system      fixed instruction text (SYSTEM_PROMPT)
//! user        few-shot input #1        \
//! assistant   few-shot feedback #1      > repeated per example
//! ...                                  /
//! user        the writer's selection and persona
//! ```
//!
//! User messages look like
//!
//! ```text
//! Input:
//! Text: "<selected text>"
//! Persona:
//! - Role: {"role": "reviewer"}
//! - Background: {"occupation": "CS professor"}
//! - Style: {"writing style": "formal", "sentence length": "short"}
//! - Content: {}
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persona::{AttributePair, Persona, PersonaSnapshot, SectionKind};

pub const SYSTEM_PROMPT: &str = concat!(
    "Personas are defined using four fixed attributes: role, background, style, and content. ",
    "Each attribute consists of user-defined key-value pairs. ",
    "The possible key-value pairs are not predefined and can vary. ",
    "Generate persona-specific feedback for the text snippet highlighted by the user, ",
    "considering the persona's unique attributes and any additional key-value pairs that might be defined by the user. ",
    "You will take the role of the persona and write from their viewpoint. ",
    "Every key-value attribute that is included in the personas definition describes the persona and therefore you. ",
    "The feedback should align with the persona's characteristics and viewpoint, ",
    "providing insights, suggestions, or comments that are relevant to the persona's role, background, ",
    "style preferences, and content preferences.\n",
    "\n",
    "Input:\n",
    "Text: \"Selected text snippet from the user's editor.\"\n",
    "Persona:\n",
    "- Role: {\"key\": \"value\"}\n",
    "- Background: {\"key\": \"value\"}\n",
    "- Style: {\"key\": \"value\"}\n",
    "- Content: {\"key\": \"value\"}\n",
    "\n",
    "Output: Generate persona-specific feedback for the provided text snippet based on the given persona attributes. ",
    "Write the feedback as if you would be this persona. ",
    "Consider the role, background, style, and content preferences of the persona. ",
    "Provide insights, suggestions, or comments that align with the persona's characteristics and viewpoint. ",
    "Feel free to incorporate any additional key-value pairs defined by the user in the persona definition ",
    "to enhance the relevance of the feedback. ",
    "Write one continuous feedback that is not longer than 200 words."
);

/// Instruction for the optional second pass that shortens feedback.
pub const CONDENSE_PROMPT: &str = concat!(
    "You will receive feedback that a reader persona wrote about a text snippet. ",
    "Rewrite this feedback so that it is considerably more concise. ",
    "Keep the persona's perspective and its most important suggestions, and keep the closing summary sentence. ",
    "Do not add new points. Reply with the rewritten feedback only."
);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("selected text is empty")]
    EmptySelection,
    #[error("few-shot example has an empty {0}")]
    EmptyExampleField(&'static str),
    #[error("malformed few-shot file: {0}")]
    MalformedFewShot(String),
    #[error("malformed persona block: {0}")]
    MalformedPersonaBlock(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    fn new(role: Role, content: impl Into<String>) -> Self {
        let content = content.into();
        debug_assert!(!content.is_empty());
        Self { role, content }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub messages: Vec<Message>,
}

impl PromptBundle {
    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// `system (user assistant)* user`, every content non-empty.
    pub fn is_well_formed(&self) -> bool {
        let n = self.messages.len();
        if n < 2 || !n.is_multiple_of(2) {
            return false;
        }
        self.messages.iter().enumerate().all(|(i, m)| {
            let expected = if i == 0 {
                Role::System
            } else if i % 2 == 1 {
                Role::User
            } else {
                Role::Assistant
            };
            m.role == expected && !m.content.is_empty()
        })
    }

    pub fn system(&self) -> Option<&str> {
        self.messages
            .first()
            .filter(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
    }

    pub fn last_user(&self) -> Option<&str> {
        self.messages
            .last()
            .filter(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    /// Canonical JSON bytes; identical bundles give identical bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("bundle serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShotExample {
    persona: PersonaSnapshot,
    selected_text: String,
    feedback_text: String,
}

impl FewShotExample {
    pub fn new(
        persona: PersonaSnapshot,
        selected_text: impl Into<String>,
        feedback_text: impl Into<String>,
    ) -> Result<Self, PromptError> {
        let selected_text = selected_text.into();
        let feedback_text = feedback_text.into();
        if selected_text.trim().is_empty() {
            return Err(PromptError::EmptyExampleField("selected_text"));
        }
        if feedback_text.trim().is_empty() {
            return Err(PromptError::EmptyExampleField("feedback_text"));
        }
        Ok(Self {
            persona,
            selected_text,
            feedback_text,
        })
    }

    pub fn persona(&self) -> &PersonaSnapshot {
        &self.persona
    }

    pub fn selected_text(&self) -> &str {
        &self.selected_text
    }

    pub fn feedback_text(&self) -> &str {
        &self.feedback_text
    }
}

/// On-disk shape of one few-shot example; `persona` uses the persona file
/// schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FewShotRecord {
    persona: Persona,
    selected_text: String,
    feedback_text: String,
}

/// Parse a few-shot file (a JSON array of `{persona, selected_text,
/// feedback_text}`). Snapshots are stamped with the persona's `updated_at` so
/// loading is deterministic.
pub fn parse_few_shot(text: &str) -> Result<Vec<FewShotExample>, PromptError> {
    let records: Vec<FewShotRecord> = serde_json::from_str(text).map_err(|e| {
        PromptError::MalformedFewShot(format!("line {}, column {}: {e}", e.line(), e.column()))
    })?;
    records
        .into_iter()
        .map(|r| {
            r.persona
                .sections
                .validate()
                .map_err(|e| PromptError::MalformedFewShot(e.to_string()))?;
            let snapshot = r.persona.snapshot_at(r.persona.updated_at);
            FewShotExample::new(snapshot, r.selected_text, r.feedback_text)
        })
        .collect()
}

const DEFAULT_FEW_SHOT: &str = include_str!("../assets/few_shot.json");

/// The six examples shipped with the crate.
pub fn default_few_shot() -> Vec<FewShotExample> {
    parse_few_shot(DEFAULT_FEW_SHOT).expect("bundled few-shot file is valid")
}

fn quoted(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn render_pairs(pairs: &[AttributePair]) -> String {
    let body = pairs
        .iter()
        .filter(|p| p.is_renderable())
        .map(|p| format!("{}: {}", quoted(&p.attribute), quoted(&p.description)))
        .collect::<Vec<_>>()
        .join(", ");
    format!("{{{body}}}")
}

/// The four `- Label: {...}` lines, newline separated, no trailing newline.
pub fn render_persona_block(persona: &PersonaSnapshot) -> String {
    SectionKind::ALL
        .iter()
        .map(|&k| {
            format!(
                "- {}: {}",
                k.prompt_label(),
                render_pairs(persona.section(k))
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_user_message(
    selected_text: &str,
    persona: &PersonaSnapshot,
) -> Result<String, PromptError> {
    if selected_text.trim().is_empty() {
        return Err(PromptError::EmptySelection);
    }
    Ok(format!(
        "Input:\nText: \"{selected_text}\"\nPersona:\n{}",
        render_persona_block(persona)
    ))
}

pub fn assemble(
    selected_text: &str,
    persona: &PersonaSnapshot,
    examples: &[FewShotExample],
) -> Result<PromptBundle, PromptError> {
    let last = render_user_message(selected_text, persona)?;
    let mut messages = Vec::with_capacity(2 * examples.len() + 2);
    messages.push(Message::new(Role::System, SYSTEM_PROMPT));
    for ex in examples {
        messages.push(Message::new(
            Role::User,
            render_user_message(&ex.selected_text, &ex.persona)?,
        ));
        messages.push(Message::new(Role::Assistant, ex.feedback_text.clone()));
    }
    messages.push(Message::new(Role::User, last));
    Ok(PromptBundle { messages })
}

/// The two-message bundle for the conciseness pass.
pub fn condense_bundle(instruction: &str, feedback: &str) -> PromptBundle {
    PromptBundle {
        messages: vec![
            Message::new(Role::System, instruction),
            Message::new(Role::User, feedback),
        ],
    }
}

// ---------------------------------------------------------------------------
// Reading rendered user messages back
// ---------------------------------------------------------------------------

/// Selection and persona pairs recovered from a rendered user message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedInput {
    pub selected_text: String,
    /// One list per section, in section order.
    pub sections: [Vec<AttributePair>; 4],
}

impl RenderedInput {
    pub fn section(&self, kind: SectionKind) -> &[AttributePair] {
        let idx = SectionKind::ALL.iter().position(|k| *k == kind).unwrap();
        &self.sections[idx]
    }
}

pub fn parse_user_message(message: &str) -> Result<RenderedInput, PromptError> {
    let bad = |m: &str| PromptError::MalformedPersonaBlock(m.to_string());
    let rest = message
        .strip_prefix("Input:\nText: \"")
        .ok_or_else(|| bad("missing input header"))?;
    let split = rest
        .rfind("\"\nPersona:\n")
        .ok_or_else(|| bad("missing persona header"))?;
    let selected_text = rest[..split].to_string();
    let block = &rest[split + "\"\nPersona:\n".len()..];
    Ok(RenderedInput {
        selected_text,
        sections: parse_persona_block(block)?,
    })
}

pub fn parse_persona_block(block: &str) -> Result<[Vec<AttributePair>; 4], PromptError> {
    let lines: Vec<&str> = block.split('\n').collect();
    if lines.len() != 4 {
        return Err(PromptError::MalformedPersonaBlock(format!(
            "expected 4 lines, found {}",
            lines.len()
        )));
    }
    let mut out: [Vec<AttributePair>; 4] = Default::default();
    for ((line, kind), slot) in lines.iter().zip(SectionKind::ALL).zip(out.iter_mut()) {
        let prefix = format!("- {}: ", kind.prompt_label());
        let braces = line.strip_prefix(&prefix).ok_or_else(|| {
            PromptError::MalformedPersonaBlock(format!("expected line starting with {prefix:?}"))
        })?;
        *slot = parse_brace_block(braces)?;
    }
    Ok(out)
}

fn parse_brace_block(s: &str) -> Result<Vec<AttributePair>, PromptError> {
    let bad = |m: &str| PromptError::MalformedPersonaBlock(format!("{m} in {s:?}"));
    let inner = s
        .strip_prefix('{')
        .and_then(|r| r.strip_suffix('}'))
        .ok_or_else(|| bad("missing braces"))?;
    let mut pairs = Vec::new();
    let mut rest = inner;
    while !rest.is_empty() {
        let (attribute, r) = take_string(rest).ok_or_else(|| bad("bad attribute"))?;
        let r = r.strip_prefix(": ").ok_or_else(|| bad("missing colon"))?;
        let (description, r) = take_string(r).ok_or_else(|| bad("bad description"))?;
        pairs.push(AttributePair::new(attribute, description));
        rest = match r.strip_prefix(", ") {
            Some(more) if !more.is_empty() => more,
            Some(_) => return Err(bad("trailing separator")),
            None if r.is_empty() => r,
            None => return Err(bad("missing separator")),
        };
    }
    Ok(pairs)
}

/// Split a leading JSON string literal off `s`.
fn take_string(s: &str) -> Option<(String, &str)> {
    if !s.starts_with('"') {
        return None;
    }
    let mut escaped = false;
    for (i, c) in s.char_indices().skip(1) {
        match c {
            _ if escaped => escaped = false,
            '\\' => escaped = true,
            '"' => {
                let literal = &s[..=i];
                let value: String = serde_json::from_str(literal).ok()?;
                return Some((value, &s[i + 1..]));
            }
            _ => {}
        }
    }
    None
}
