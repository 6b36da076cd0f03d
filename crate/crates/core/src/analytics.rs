//! Session event log and the metrics derived from it: counts, inter-feedback
//! intervals, editor/sidebar focus timelines and persona word contributions.
//!
//! The log is append-only with non-decreasing timestamps. All metrics are pure
//! folds over it.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{CardId, History};
use crate::persona::{PersonaId, PersonaSnapshot, SectionKind};
use crate::text::count_words;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("event at {got} precedes the last logged event at {previous}")]
    NonMonotonicTimestamp {
        previous: DateTime<Utc>,
        got: DateTime<Utc>,
    },
    #[error("no persona snapshot for feedback request by {persona_id}")]
    UnresolvablePersona { persona_id: PersonaId },
    #[error("malformed log line {line}: {message}")]
    MalformedLog { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Focus {
    Editor,
    Sidebar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventKind {
    EditorFocus,
    SidebarFocus,
    PersonaCreated {
        persona_id: PersonaId,
    },
    PersonaEdited {
        persona_id: PersonaId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        section: Option<SectionKind>,
    },
    PersonaTabOpened {
        persona_id: PersonaId,
    },
    FeedbackRequested {
        persona_id: PersonaId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        card_id: Option<CardId>,
    },
    FeedbackFailed {
        persona_id: PersonaId,
        code: String,
    },
    FeedbackDeleted {
        card_id: CardId,
    },
}

impl EventKind {
    pub fn focus(&self) -> Option<Focus> {
        match self {
            EventKind::EditorFocus => Some(Focus::Editor),
            EventKind::SidebarFocus => Some(Focus::Sidebar),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl SessionEvent {
    pub fn new(timestamp: DateTime<Utc>, kind: EventKind) -> Self {
        Self { timestamp, kind }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionLog {
    events: Vec<SessionEvent>,
}

impl SessionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn last_timestamp(&self) -> Option<DateTime<Utc>> {
        self.events.last().map(|e| e.timestamp)
    }

    pub fn record(&mut self, event: SessionEvent) -> Result<(), AnalyticsError> {
        if let Some(previous) = self.last_timestamp() {
            if event.timestamp < previous {
                return Err(AnalyticsError::NonMonotonicTimestamp {
                    previous,
                    got: event.timestamp,
                });
            }
        }
        self.events.push(event);
        Ok(())
    }

    pub fn from_events(
        events: impl IntoIterator<Item = SessionEvent>,
    ) -> Result<Self, AnalyticsError> {
        let mut log = Self::new();
        for e in events {
            log.record(e)?;
        }
        Ok(log)
    }

    pub fn to_line(event: &SessionEvent) -> String {
        let mut line = serde_json::to_string(event).expect("event serializes");
        line.push('\n');
        line
    }

    pub fn to_jsonl(&self) -> String {
        self.events.iter().map(Self::to_line).collect()
    }

    /// Parse a JSON-lines log. Blank lines are skipped. An unparsable final
    /// line without a trailing newline is treated as a torn append and dropped.
    pub fn from_jsonl(text: &str) -> Result<Self, AnalyticsError> {
        let mut log = Self::new();
        let torn_tail = !text.is_empty() && !text.ends_with('\n');
        let lines: Vec<&str> = text.lines().collect();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<SessionEvent>(line) {
                Ok(event) => log.record(event)?,
                Err(_) if torn_tail && i + 1 == lines.len() => break,
                Err(e) => {
                    return Err(AnalyticsError::MalformedLog {
                        line: i + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        Ok(log)
    }
}

// ---------------------------------------------------------------------------
// Counts and intervals
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub personas_created: usize,
    pub feedbacks_requested: usize,
    pub persona_revisits: usize,
    /// Mean gap between consecutive feedback requests, in milliseconds.
    /// Absent with fewer than two requests.
    pub mean_inter_feedback_interval_ms: Option<f64>,
    pub final_word_count: usize,
}

impl SessionStats {
    pub fn with_final_text(mut self, text: &str) -> Self {
        self.final_word_count = count_words(text);
        self
    }
}

/// Incremental form of [`compute_stats`].
#[derive(Debug, Clone, Default)]
pub struct StatsAccumulator {
    created: HashSet<PersonaId>,
    personas_created: usize,
    feedbacks_requested: usize,
    persona_revisits: usize,
    first_request: Option<DateTime<Utc>>,
    last_request: Option<DateTime<Utc>>,
}

impl StatsAccumulator {
    pub fn push(&mut self, event: &SessionEvent) {
        match &event.kind {
            EventKind::PersonaCreated { persona_id } => {
                self.personas_created += 1;
                self.created.insert(persona_id.clone());
            }
            EventKind::PersonaTabOpened { persona_id } if self.created.contains(persona_id) => {
                self.persona_revisits += 1;
            }
            EventKind::FeedbackRequested { .. } => {
                self.feedbacks_requested += 1;
                self.first_request.get_or_insert(event.timestamp);
                self.last_request = Some(event.timestamp);
            }
            _ => {}
        }
    }

    pub fn stats(&self) -> SessionStats {
        // Consecutive gaps telescope: their sum is last - first.
        let mean = match (self.first_request, self.last_request) {
            (Some(first), Some(last)) if self.feedbacks_requested >= 2 => Some(
                (last - first).num_milliseconds() as f64 / (self.feedbacks_requested - 1) as f64,
            ),
            _ => None,
        };
        SessionStats {
            personas_created: self.personas_created,
            feedbacks_requested: self.feedbacks_requested,
            persona_revisits: self.persona_revisits,
            mean_inter_feedback_interval_ms: mean,
            final_word_count: 0,
        }
    }
}

pub fn compute_stats(log: &SessionLog) -> SessionStats {
    let mut acc = StatsAccumulator::default();
    log.events().iter().for_each(|e| acc.push(e));
    acc.stats()
}

// ---------------------------------------------------------------------------
// Focus timeline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FocusSegment {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub focus: Focus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FocusTimeline {
    pub segments: Vec<FocusSegment>,
    pub persona_marks: Vec<DateTime<Utc>>,
}

/// Build the editor/sidebar timeline. Each focus event opens a segment that the
/// next focus change closes; repeated events for the same pane are merged. The
/// last segment ends at `session_end`, or at the last logged event when none is
/// given. Zero-length segments are dropped.
pub fn focus_timeline(log: &SessionLog, session_end: Option<DateTime<Utc>>) -> FocusTimeline {
    let mut segments = Vec::new();
    let mut open: Option<(DateTime<Utc>, Focus)> = None;
    let mut persona_marks = Vec::new();

    for event in log.events() {
        if let EventKind::PersonaCreated { .. } = event.kind {
            persona_marks.push(event.timestamp);
        }
        let Some(focus) = event.kind.focus() else {
            continue;
        };
        match open {
            Some((_, current)) if current == focus => {}
            Some((start, current)) => {
                if event.timestamp > start {
                    segments.push(FocusSegment {
                        start,
                        end: event.timestamp,
                        focus: current,
                    });
                }
                open = Some((event.timestamp, focus));
            }
            None => open = Some((event.timestamp, focus)),
        }
    }

    if let Some((start, focus)) = open {
        let end = session_end
            .or_else(|| log.last_timestamp())
            .unwrap_or(start);
        if end > start {
            segments.push(FocusSegment { start, end, focus });
        }
    }
    // A merged neighbour can have the same focus after a zero-length segment
    // was dropped between them.
    let mut merged: Vec<FocusSegment> = Vec::with_capacity(segments.len());
    for seg in segments {
        match merged.last_mut() {
            Some(prev) if prev.focus == seg.focus && prev.end == seg.start => prev.end = seg.end,
            _ => merged.push(seg),
        }
    }
    persona_marks.sort();
    FocusTimeline {
        segments: merged,
        persona_marks,
    }
}

/// One row of the plotting export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineRow {
    pub kind: &'static str,
    pub start_ms: i64,
    pub end_ms: i64,
    pub focus: Option<Focus>,
}

impl FocusTimeline {
    pub fn rows(&self) -> Vec<TimelineRow> {
        let segs = self.segments.iter().map(|s| TimelineRow {
            kind: "segment",
            start_ms: s.start.timestamp_millis(),
            end_ms: s.end.timestamp_millis(),
            focus: Some(s.focus),
        });
        let marks = self.persona_marks.iter().map(|t| TimelineRow {
            kind: "persona_mark",
            start_ms: t.timestamp_millis(),
            end_ms: t.timestamp_millis(),
            focus: None,
        });
        segs.chain(marks).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.rows() {
            w.serialize(row).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
    }
}

// ---------------------------------------------------------------------------
// Attribute contribution
// ---------------------------------------------------------------------------

const STOPWORDS_FILE: &str = include_str!("../assets/stopwords.txt");

pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_FILE
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

/// Lowercased words with surrounding punctuation stripped and stopwords removed.
pub fn content_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty() && !stopwords().contains(w.as_str()))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeContribution {
    pub attributes: BTreeMap<String, u64>,
    pub descriptions: BTreeMap<String, u64>,
}

impl AttributeContribution {
    pub fn add_snapshot(&mut self, snapshot: &PersonaSnapshot) {
        for (_, pairs) in snapshot.sections().iter() {
            for pair in pairs.iter().filter(|p| p.is_renderable()) {
                for w in content_words(&pair.attribute) {
                    *self.attributes.entry(w).or_default() += 1;
                }
                for w in content_words(&pair.description) {
                    *self.descriptions.entry(w).or_default() += 1;
                }
            }
        }
    }

    pub fn merge(&mut self, other: &AttributeContribution) {
        for (w, n) in &other.attributes {
            *self.attributes.entry(w.clone()).or_default() += n;
        }
        for (w, n) in &other.descriptions {
            *self.descriptions.entry(w.clone()).or_default() += n;
        }
    }
}

/// Where to find the persona state behind each feedback request: first by the
/// card the request produced, then by persona id.
#[derive(Debug, Clone, Default)]
pub struct SnapshotIndex {
    by_card: HashMap<CardId, PersonaSnapshot>,
    by_persona: HashMap<PersonaId, PersonaSnapshot>,
}

impl SnapshotIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_history(history: &History) -> Self {
        let mut index = Self::new();
        for card in history.cards() {
            index.insert_card(card.id().clone(), card.persona().clone());
        }
        index
    }

    pub fn insert_card(&mut self, card: CardId, snapshot: PersonaSnapshot) {
        self.by_card.insert(card, snapshot);
    }

    pub fn insert_persona(&mut self, snapshot: PersonaSnapshot) {
        self.by_persona
            .insert(snapshot.persona_id().clone(), snapshot);
    }

    pub fn resolve(
        &self,
        persona_id: &PersonaId,
        card_id: Option<&CardId>,
    ) -> Option<&PersonaSnapshot> {
        card_id
            .and_then(|c| self.by_card.get(c))
            .or_else(|| self.by_persona.get(persona_id))
    }
}

/// Every feedback request adds one count per content word of each renderable
/// pair of the requesting persona, attributes and descriptions separately.
pub fn attribute_contribution(
    log: &SessionLog,
    index: &SnapshotIndex,
) -> Result<AttributeContribution, AnalyticsError> {
    let mut out = AttributeContribution::default();
    for event in log.events() {
        if let EventKind::FeedbackRequested {
            persona_id,
            card_id,
        } = &event.kind
        {
            let snapshot = index.resolve(persona_id, card_id.as_ref()).ok_or_else(|| {
                AnalyticsError::UnresolvablePersona {
                    persona_id: persona_id.clone(),
                }
            })?;
            out.add_snapshot(snapshot);
        }
    }
    Ok(out)
}
