//! Writer-defined reader personas.
//!
//! A persona is a name plus four fixed sections of attribute/description
//! pairs. Every section is always present, possibly empty. Feedback cards never
//! hold a live persona; they hold a [`PersonaSnapshot`] taken at request time.

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{now_ms, truncate_ms};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PersonaError {
    #[error("attribute must not be empty")]
    EmptyAttribute,
    #[error("index {index} out of range for section with {len} pairs")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("malformed persona at line {line}, column {column}: {message}")]
    MalformedPersona {
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PersonaId(String);

impl PersonaId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn generate() -> Self {
        Self(uuid::Uuid::new_v4().to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PersonaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributePair {
    pub attribute: String,
    pub description: String,
}

impl AttributePair {
    pub fn new(attribute: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            attribute: attribute.into(),
            description: description.into(),
        }
    }

    pub fn validate(&self) -> Result<(), PersonaError> {
        if self.attribute.trim().is_empty() {
            return Err(PersonaError::EmptyAttribute);
        }
        Ok(())
    }

    /// Pairs still being typed (empty description) stay in storage but are
    /// never rendered into a prompt.
    pub fn is_renderable(&self) -> bool {
        !self.description.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    RoleTask,
    Background,
    StylePreferences,
    ContentPreferences,
}

impl SectionKind {
    pub const ALL: [SectionKind; 4] = [
        SectionKind::RoleTask,
        SectionKind::Background,
        SectionKind::StylePreferences,
        SectionKind::ContentPreferences,
    ];

    /// Key used in the persona file schema.
    pub fn key(self) -> &'static str {
        match self {
            SectionKind::RoleTask => "role_task",
            SectionKind::Background => "background",
            SectionKind::StylePreferences => "style_preferences",
            SectionKind::ContentPreferences => "content_preferences",
        }
    }

    /// Label used in the rendered prompt (`- Role: {...}`).
    pub fn prompt_label(self) -> &'static str {
        match self {
            SectionKind::RoleTask => "Role",
            SectionKind::Background => "Background",
            SectionKind::StylePreferences => "Style",
            SectionKind::ContentPreferences => "Content",
        }
    }

    /// Section header shown in the persona form.
    pub fn title(self) -> &'static str {
        match self {
            SectionKind::RoleTask => "Role/Task of Persona",
            SectionKind::Background => "Persona Background",
            SectionKind::StylePreferences => "Style Preferences",
            SectionKind::ContentPreferences => "Content Preferences",
        }
    }
}

/// The four sections. Being a struct rather than a map, a persona can never be
/// missing one, and deserialization rejects input that omits any key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sections {
    pub role_task: Vec<AttributePair>,
    pub background: Vec<AttributePair>,
    pub style_preferences: Vec<AttributePair>,
    pub content_preferences: Vec<AttributePair>,
}

impl Sections {
    pub fn get(&self, kind: SectionKind) -> &[AttributePair] {
        match kind {
            SectionKind::RoleTask => &self.role_task,
            SectionKind::Background => &self.background,
            SectionKind::StylePreferences => &self.style_preferences,
            SectionKind::ContentPreferences => &self.content_preferences,
        }
    }

    fn get_mut(&mut self, kind: SectionKind) -> &mut Vec<AttributePair> {
        match kind {
            SectionKind::RoleTask => &mut self.role_task,
            SectionKind::Background => &mut self.background,
            SectionKind::StylePreferences => &mut self.style_preferences,
            SectionKind::ContentPreferences => &mut self.content_preferences,
        }
    }

    /// Sections in rendering order.
    pub fn iter(&self) -> impl Iterator<Item = (SectionKind, &[AttributePair])> + '_ {
        SectionKind::ALL.into_iter().map(move |k| (k, self.get(k)))
    }

    pub fn is_empty(&self) -> bool {
        self.iter().all(|(_, pairs)| pairs.is_empty())
    }

    pub fn validate(&self) -> Result<(), PersonaError> {
        self.iter()
            .flat_map(|(_, pairs)| pairs.iter())
            .try_for_each(AttributePair::validate)
    }
}

/// A single mutation of a persona, as sent by the persona form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PersonaEdit {
    Rename {
        name: String,
    },
    AddPair {
        section: SectionKind,
        pair: AttributePair,
    },
    RemovePair {
        section: SectionKind,
        index: usize,
    },
    EditPair {
        section: SectionKind,
        index: usize,
        pair: AttributePair,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub id: PersonaId,
    pub name: String,
    pub sections: Sections,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl Persona {
    /// A fresh persona with a random id and four empty sections. The name may
    /// be empty.
    pub fn new(name: impl Into<String>) -> Self {
        Self::with_id(PersonaId::generate(), name, now_ms())
    }

    pub fn with_id(id: PersonaId, name: impl Into<String>, at: DateTime<Utc>) -> Self {
        let at = truncate_ms(at);
        Self {
            id,
            name: name.into(),
            sections: Sections::default(),
            created_at: at,
            updated_at: at,
        }
    }

    pub fn section(&self, kind: SectionKind) -> &[AttributePair] {
        self.sections.get(kind)
    }

    /// Apply one edit, stamping `updated_at` with `at` (never earlier than
    /// `created_at`). On error the persona is left untouched.
    pub fn apply(&mut self, edit: PersonaEdit, at: DateTime<Utc>) -> Result<(), PersonaError> {
        match edit {
            PersonaEdit::Rename { name } => self.name = name,
            PersonaEdit::AddPair { section, pair } => {
                pair.validate()?;
                self.sections.get_mut(section).push(pair);
            }
            PersonaEdit::RemovePair { section, index } => {
                let pairs = self.sections.get_mut(section);
                if index >= pairs.len() {
                    return Err(PersonaError::IndexOutOfRange {
                        index,
                        len: pairs.len(),
                    });
                }
                pairs.remove(index);
            }
            PersonaEdit::EditPair {
                section,
                index,
                pair,
            } => {
                let pairs = self.sections.get_mut(section);
                if index >= pairs.len() {
                    return Err(PersonaError::IndexOutOfRange {
                        index,
                        len: pairs.len(),
                    });
                }
                pair.validate()?;
                pairs[index] = pair;
            }
        }
        self.touch(at);
        Ok(())
    }

    /// Replace name and all sections at once.
    pub fn replace(
        &mut self,
        name: String,
        sections: Sections,
        at: DateTime<Utc>,
    ) -> Result<(), PersonaError> {
        sections.validate()?;
        self.name = name;
        self.sections = sections;
        self.touch(at);
        Ok(())
    }

    fn touch(&mut self, at: DateTime<Utc>) {
        self.updated_at = truncate_ms(at).max(self.created_at);
    }

    pub fn add_pair(
        &mut self,
        section: SectionKind,
        pair: AttributePair,
    ) -> Result<(), PersonaError> {
        self.apply(PersonaEdit::AddPair { section, pair }, now_ms())
    }

    pub fn remove_pair(&mut self, section: SectionKind, index: usize) -> Result<(), PersonaError> {
        self.apply(PersonaEdit::RemovePair { section, index }, now_ms())
    }

    pub fn edit_pair(
        &mut self,
        section: SectionKind,
        index: usize,
        pair: AttributePair,
    ) -> Result<(), PersonaError> {
        self.apply(
            PersonaEdit::EditPair {
                section,
                index,
                pair,
            },
            now_ms(),
        )
    }

    pub fn snapshot(&self) -> PersonaSnapshot {
        self.snapshot_at(now_ms())
    }

    pub fn snapshot_at(&self, at: DateTime<Utc>) -> PersonaSnapshot {
        PersonaSnapshot {
            persona_id: self.id.clone(),
            name: self.name.clone(),
            sections: self.sections.clone(),
            snapshot_at: truncate_ms(at),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("persona serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PersonaError> {
        let persona: Persona = serde_json::from_str(text).map_err(malformed)?;
        persona.validate()?;
        Ok(persona)
    }

    fn validate(&self) -> Result<(), PersonaError> {
        self.sections
            .validate()
            .map_err(|e| PersonaError::MalformedPersona {
                line: 0,
                column: 0,
                message: e.to_string(),
            })?;
        if self.updated_at < self.created_at {
            return Err(PersonaError::MalformedPersona {
                line: 0,
                column: 0,
                message: "updated_at precedes created_at".into(),
            });
        }
        Ok(())
    }
}

fn malformed(e: serde_json::Error) -> PersonaError {
    PersonaError::MalformedPersona {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Frozen copy of a persona. Fields are private so nothing can alter a
/// snapshot after it has been taken.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaSnapshot {
    persona_id: PersonaId,
    name: String,
    sections: Sections,
    snapshot_at: DateTime<Utc>,
}

impl PersonaSnapshot {
    pub fn persona_id(&self) -> &PersonaId {
        &self.persona_id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sections(&self) -> &Sections {
        &self.sections
    }

    pub fn section(&self, kind: SectionKind) -> &[AttributePair] {
        self.sections.get(kind)
    }

    pub fn snapshot_at(&self) -> DateTime<Utc> {
        self.snapshot_at
    }

    /// Same name and sections, ignoring when the snapshot was taken.
    pub fn same_contents(&self, other: &PersonaSnapshot) -> bool {
        self.persona_id == other.persona_id
            && self.name == other.name
            && self.sections == other.sections
    }
}

// ---------------------------------------------------------------------------
// Section guidance shown behind the info buttons of the persona form
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SectionGuidance {
    pub section: SectionKind,
    pub title: &'static str,
    pub description: &'static str,
    pub example_pairs: Vec<AttributePair>,
}

type GuidanceEntry = (
    SectionKind,
    &'static str,
    &'static [(&'static str, &'static str)],
);

const GUIDANCE: [GuidanceEntry; 4] = [
    (
        SectionKind::RoleTask,
        "Attributes describing which role this persona takes when reading your text and what task it should perform.",
        &[
            ("Role", "reviewer"),
            ("Task", "check whether the argument is convincing"),
            ("Relation to author", "supervisor"),
        ],
    ),
    (
        SectionKind::Background,
        "Attributes describing who this persona is: profession, expertise, and prior knowledge of the topic.",
        &[
            ("Occupation", "CS professor"),
            ("Field of expertise", "human-computer interaction"),
            ("Prior knowledge", "none on this topic"),
        ],
    ),
    (
        SectionKind::StylePreferences,
        "Attributes describing the style preferences of this persona.",
        &[
            ("Writing Style", "formal"),
            ("Word choice", "technical"),
            ("Sentence structure", "complex, nested sentences"),
        ],
    ),
    (
        SectionKind::ContentPreferences,
        "Attributes describing what this persona wants to find in a text and what it cares about.",
        &[
            ("Focus", "practical applications"),
            ("Evidence", "concrete numbers and sources"),
            ("Examples", "real-world analogies"),
        ],
    ),
];

/// One guidance entry per section, in section order.
pub fn section_guidance() -> Vec<SectionGuidance> {
    GUIDANCE
        .iter()
        .map(|(section, description, examples)| SectionGuidance {
            section: *section,
            title: section.title(),
            description,
            example_pairs: examples
                .iter()
                .map(|(a, d)| AttributePair::new(*a, *d))
                .collect(),
        })
        .collect()
}
