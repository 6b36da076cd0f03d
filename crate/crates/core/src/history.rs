//! Feedback cards and the per-document history that holds them.
//!
//! Cards are kept newest first: descending by `created_at`, ties broken by
//! descending card id.

use std::cmp::Ordering;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::FeedbackResult;
use crate::persona::PersonaSnapshot;
use crate::text;

/// Sentences shown on a collapsed card.
pub const DEFAULT_PREVIEW_SENTENCES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HistoryError {
    #[error("card {0} already in history")]
    DuplicateCard(CardId),
    #[error("card {0} not found")]
    CardNotFound(CardId),
    #[error("malformed history at line {line}, column {column}: {message}")]
    MalformedHistory {
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CardId(String);

impl CardId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CardId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Half-open character range `[start, end)` into a document's canonical text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Selection {
    pub start: usize,
    pub end: usize,
}

impl Selection {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn slice<'a>(&self, text: &'a str) -> Option<&'a str> {
        text::char_slice(text, self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextStatus {
    /// The stored offsets still point at the stored text.
    Current,
    /// The document changed under the selection; nothing can be highlighted.
    Stale,
}

/// What the feedback was based on, copied at request time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardContext {
    pub document_id: String,
    pub selection: Selection,
    pub selected_text: String,
}

impl CardContext {
    pub fn status(&self, document_text: &str) -> ContextStatus {
        match self.selection.slice(document_text) {
            Some(s) if s == self.selected_text => ContextStatus::Current,
            _ => ContextStatus::Stale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackCard {
    id: CardId,
    persona_name: String,
    persona: PersonaSnapshot,
    context: CardContext,
    feedback: FeedbackResult,
    created_at: DateTime<Utc>,
}

impl FeedbackCard {
    pub fn new(
        id: CardId,
        persona: PersonaSnapshot,
        context: CardContext,
        feedback: FeedbackResult,
        created_at: DateTime<Utc>,
    ) -> Self {
        Self {
            id,
            persona_name: persona.name().to_string(),
            persona,
            context,
            feedback,
            created_at,
        }
    }

    pub fn id(&self) -> &CardId {
        &self.id
    }

    pub fn persona_name(&self) -> &str {
        &self.persona_name
    }

    pub fn persona(&self) -> &PersonaSnapshot {
        &self.persona
    }

    pub fn context(&self) -> &CardContext {
        &self.context
    }

    pub fn feedback(&self) -> &FeedbackResult {
        &self.feedback
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn preview(&self, limit: usize) -> &str {
        text::preview(self.feedback.text(), limit)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("card serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HistoryError> {
        serde_json::from_str(text).map_err(malformed)
    }
}

/// Newest-first comparison: `Less` means `a` is displayed above `b`.
pub fn display_order(a: &FeedbackCard, b: &FeedbackCard) -> Ordering {
    (b.created_at, &b.id).cmp(&(a.created_at, &a.id))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "HistoryRecord")]
pub struct History {
    document_id: String,
    cards: Vec<FeedbackCard>,
}

#[derive(Deserialize)]
struct HistoryRecord {
    document_id: String,
    cards: Vec<FeedbackCard>,
}

impl TryFrom<HistoryRecord> for History {
    type Error = String;

    fn try_from(r: HistoryRecord) -> Result<Self, String> {
        for pair in r.cards.windows(2) {
            match display_order(&pair[0], &pair[1]) {
                Ordering::Less => {}
                Ordering::Equal => return Err(format!("duplicate card {}", pair[1].id)),
                Ordering::Greater => {
                    return Err(format!("card {} is out of newest-first order", pair[1].id))
                }
            }
        }
        let mut ids: Vec<_> = r.cards.iter().map(|c| &c.id).collect();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(format!("duplicate card {}", w[0]));
        }
        Ok(History {
            document_id: r.document_id,
            cards: r.cards,
        })
    }
}

impl History {
    pub fn new(document_id: impl Into<String>) -> Self {
        Self {
            document_id: document_id.into(),
            cards: Vec::new(),
        }
    }

    pub fn document_id(&self) -> &str {
        &self.document_id
    }

    pub fn cards(&self) -> &[FeedbackCard] {
        &self.cards
    }

    pub fn len(&self) -> usize {
        self.cards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cards.is_empty()
    }

    pub fn get(&self, id: &CardId) -> Option<&FeedbackCard> {
        self.cards.iter().find(|c| &c.id == id)
    }

    pub fn contains(&self, id: &CardId) -> bool {
        self.get(id).is_some()
    }

    /// Insert a card at its newest-first position.
    pub fn append(&mut self, card: FeedbackCard) -> Result<(), HistoryError> {
        if self.contains(&card.id) {
            return Err(HistoryError::DuplicateCard(card.id));
        }
        let pos = self
            .cards
            .partition_point(|c| display_order(c, &card) == Ordering::Less);
        self.cards.insert(pos, card);
        Ok(())
    }

    pub fn delete(&mut self, id: &CardId) -> Result<FeedbackCard, HistoryError> {
        let pos = self
            .cards
            .iter()
            .position(|c| &c.id == id)
            .ok_or_else(|| HistoryError::CardNotFound(id.clone()))?;
        Ok(self.cards.remove(pos))
    }

    pub fn save(&self) -> String {
        serde_json::to_string_pretty(self).expect("history serializes")
    }

    pub fn load(text: &str) -> Result<Self, HistoryError> {
        serde_json::from_str(text).map_err(malformed)
    }
}

fn malformed(e: serde_json::Error) -> HistoryError {
    HistoryError::MalformedHistory {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::from_millis;
    use crate::engine::FeedbackResult;
    use crate::persona::{Persona, PersonaId};
    use std::time::Duration;

    fn card(id: &str, at_ms: i64) -> FeedbackCard {
        let persona = Persona::with_id(PersonaId::new("p"), "Persona 1", from_millis(0));
        FeedbackCard::new(
            CardId::new(id),
            persona.snapshot_at(from_millis(at_ms)),
            CardContext {
                document_id: "doc".into(),
                selection: Selection::new(0, 4),
                selected_text: "Text".into(),
            },
            FeedbackResult::new("As a reader, fine. Overall, ok.", Duration::ZERO, false).unwrap(),
            from_millis(at_ms),
        )
    }

    fn ids(h: &History) -> Vec<&str> {
        h.cards().iter().map(|c| c.id().as_str()).collect()
    }

    #[test]
    fn append_to_empty() {
        let mut h = History::new("doc");
        h.append(card("a", 10)).unwrap();
        assert_eq!(ids(&h), vec!["a"]);
    }

    #[test]
    fn newer_card_goes_on_top_and_older_below() {
        let mut h = History::new("doc");
        h.append(card("a", 10)).unwrap();
        h.append(card("b", 30)).unwrap();
        h.append(card("c", 20)).unwrap();
        let mut reference = [("a", 10), ("b", 30), ("c", 20)];
        reference.sort_by(|x, y| (y.1, y.0).cmp(&(x.1, x.0)));
        let expected: Vec<_> = reference.iter().map(|x| x.0).collect();
        assert_eq!(ids(&h), expected);
    }

    #[test]
    fn timestamp_ties_break_on_descending_id() {
        let mut h = History::new("doc");
        h.append(card("a", 10)).unwrap();
        h.append(card("c", 10)).unwrap();
        h.append(card("b", 10)).unwrap();
        assert_eq!(ids(&h), vec!["c", "b", "a"]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut h = History::new("doc");
        h.append(card("a", 10)).unwrap();
        assert_eq!(
            h.append(card("a", 99)),
            Err(HistoryError::DuplicateCard(CardId::new("a")))
        );
        assert_eq!(h.len(), 1);
    }

    #[test]
    fn delete_cases() {
        let mut h = History::new("doc");
        h.append(card("a", 10)).unwrap();
        h.delete(&CardId::new("a")).unwrap();
        assert!(h.is_empty());
        assert_eq!(
            h.delete(&CardId::new("zz")),
            Err(HistoryError::CardNotFound(CardId::new("zz")))
        );

        for (id, t) in [("a", 1), ("b", 2), ("c", 3)] {
            h.append(card(id, t)).unwrap();
        }
        let before: Vec<String> = ids(&h).into_iter().map(String::from).collect();
        h.delete(&CardId::new("b")).unwrap();
        let expected: Vec<&str> = before
            .iter()
            .map(String::as_str)
            .filter(|i| *i != "b")
            .collect();
        assert_eq!(ids(&h), expected);
    }

    #[test]
    fn preview_of_card() {
        let c = card("a", 1);
        assert_eq!(c.preview(1), "As a reader, fine.");
        assert_eq!(c.preview(3), c.feedback().text());
    }

    #[test]
    fn save_load_round_trip() {
        let mut h = History::new("doc");
        for (id, t) in [("a", 1), ("b", 2), ("c", 3)] {
            h.append(card(id, t)).unwrap();
        }
        let saved = h.save();
        let loaded = History::load(&saved).unwrap();
        assert_eq!(loaded, h);
        assert_eq!(loaded.save(), saved);
    }

    #[test]
    fn load_errors() {
        assert!(matches!(
            History::load(""),
            Err(HistoryError::MalformedHistory { .. })
        ));
        let mut h = History::new("doc");
        h.append(card("a", 1)).unwrap();
        h.append(card("b", 2)).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&h.save()).unwrap();
        v["cards"].as_array_mut().unwrap().reverse();
        assert!(History::load(&v.to_string()).is_err());
    }

    #[test]
    fn load_rejects_inconsistent_word_count() {
        let mut h = History::new("doc");
        h.append(card("a", 1)).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&h.save()).unwrap();
        v["cards"][0]["feedback"]["word_count"] = 999.into();
        assert!(History::load(&v.to_string()).is_err());
    }

    #[test]
    fn context_staleness() {
        let ctx = CardContext {
            document_id: "d".into(),
            selection: Selection::new(6, 11),
            selected_text: "world".into(),
        };
        assert_eq!(ctx.status("hello world"), ContextStatus::Current);
        assert_eq!(ctx.status("hello there"), ContextStatus::Stale);
        assert_eq!(ctx.status("hello"), ContextStatus::Stale);
    }
}
