//! File-backed persistence. Whole-object files are replaced atomically (write
//! to a temporary file in the same directory, then rename); session events are
//! appended one JSON line at a time.
//!
//! ```text
//! data_dir/
//!   personas/{persona_id}.json
//!   documents/{document_id}/document.json
//!   documents/{document_id}/history.json
//!   documents/{document_id}/events.jsonl
//! ```

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use persona_feedback_core::analytics::{AnalyticsError, SessionEvent, SessionLog};
use persona_feedback_core::history::HistoryError;
use persona_feedback_core::persona::PersonaError;
use persona_feedback_core::{History, Persona, PersonaId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid identifier {0:?}")]
    InvalidId(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

pub type StoreResult<T> = Result<T, StoreError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub title: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

/// Identifiers become path components, so only a conservative alphabet is
/// accepted.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

fn check(id: &str) -> StoreResult<()> {
    if valid_id(id) {
        Ok(())
    } else {
        Err(StoreError::InvalidId(id.to_string()))
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn corrupt(path: &Path, message: impl ToString) -> StoreError {
    StoreError::Corrupt {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Replace `path` with `bytes` so that readers see either the old or the new
/// contents, never a partial write.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> StoreResult<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| StoreError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn read_optional(path: &Path) -> StoreResult<Option<String>> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path)(e)),
    }
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> StoreResult<Self> {
        let root = root.into();
        for sub in ["personas", "documents"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn persona_path(&self, id: &str) -> StoreResult<PathBuf> {
        check(id)?;
        Ok(self.root.join("personas").join(format!("{id}.json")))
    }

    fn document_dir(&self, id: &str) -> StoreResult<PathBuf> {
        check(id)?;
        Ok(self.root.join("documents").join(id))
    }

    // Personas

    pub fn load_persona(&self, id: &PersonaId) -> StoreResult<Option<Persona>> {
        let path = self.persona_path(id.as_str())?;
        read_optional(&path)?
            .map(|s| Persona::from_json(&s).map_err(|e: PersonaError| corrupt(&path, e)))
            .transpose()
    }

    pub fn save_persona(&self, persona: &Persona) -> StoreResult<()> {
        let path = self.persona_path(persona.id.as_str())?;
        write_atomic(&path, persona.to_json().as_bytes())
    }

    /// Returns whether a persona file existed.
    pub fn delete_persona(&self, id: &PersonaId) -> StoreResult<bool> {
        let path = self.persona_path(id.as_str())?;
        match fs::remove_file(&path) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(false),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    /// All personas, oldest first.
    pub fn list_personas(&self) -> StoreResult<Vec<Persona>> {
        let dir = self.root.join("personas");
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            out.push(Persona::from_json(&text).map_err(|e| corrupt(&path, e))?);
        }
        out.sort_by(|a, b| (a.created_at, a.id.as_str()).cmp(&(b.created_at, b.id.as_str())));
        Ok(out)
    }

    // Documents

    pub fn load_document(&self, id: &str) -> StoreResult<Option<DocumentRecord>> {
        let path = self.document_dir(id)?.join("document.json");
        read_optional(&path)?
            .map(|s| serde_json::from_str(&s).map_err(|e| corrupt(&path, e)))
            .transpose()
    }

    pub fn save_document(&self, doc: &DocumentRecord) -> StoreResult<()> {
        let path = self.document_dir(&doc.id)?.join("document.json");
        let json = serde_json::to_vec_pretty(doc).expect("document serializes");
        write_atomic(&path, &json)
    }

    /// The stored history, or an empty one for a document without cards.
    pub fn load_history(&self, document_id: &str) -> StoreResult<History> {
        let path = self.document_dir(document_id)?.join("history.json");
        match read_optional(&path)? {
            None => Ok(History::new(document_id)),
            Some(s) => History::load(&s).map_err(|e: HistoryError| corrupt(&path, e)),
        }
    }

    pub fn save_history(&self, history: &History) -> StoreResult<()> {
        let path = self
            .document_dir(history.document_id())?
            .join("history.json");
        write_atomic(&path, history.save().as_bytes())
    }

    pub fn load_log(&self, document_id: &str) -> StoreResult<SessionLog> {
        let path = self.document_dir(document_id)?.join("events.jsonl");
        match read_optional(&path)? {
            None => Ok(SessionLog::new()),
            Some(s) => SessionLog::from_jsonl(&s).map_err(|e: AnalyticsError| corrupt(&path, e)),
        }
    }

    pub fn append_events(&self, document_id: &str, events: &[SessionEvent]) -> StoreResult<()> {
        if events.is_empty() {
            return Ok(());
        }
        let dir = self.document_dir(document_id)?;
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join("events.jsonl");
        let mut buf = String::new();
        for e in events {
            buf.push_str(&SessionLog::to_line(e));
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        file.write_all(buf.as_bytes()).map_err(io_err(&path))?;
        file.sync_data().map_err(io_err(&path))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use persona_feedback_core::analytics::EventKind;
    use persona_feedback_core::clock::from_millis;

    #[test]
    fn rejects_path_like_ids() {
        for bad in ["", "..", "a/b", "a\\b", "é", "x.json"] {
            assert!(!valid_id(bad), "{bad:?}");
        }
        assert!(valid_id("doc-1_A"));
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(matches!(
            store.load_document("../x"),
            Err(StoreError::InvalidId(_))
        ));
    }

    #[test]
    fn persona_round_trip_and_delete() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let p = Persona::with_id(PersonaId::new("p1"), "Reviewer", from_millis(5));
        store.save_persona(&p).unwrap();
        assert_eq!(store.load_persona(&p.id).unwrap(), Some(p.clone()));
        assert_eq!(store.list_personas().unwrap(), vec![p.clone()]);
        assert!(store.delete_persona(&p.id).unwrap());
        assert!(!store.delete_persona(&p.id).unwrap());
        assert_eq!(store.load_persona(&p.id).unwrap(), None);
    }

    #[test]
    fn missing_history_and_log_are_empty() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(store.load_history("d").unwrap().is_empty());
        assert!(store.load_log("d").unwrap().is_empty());
    }

    #[test]
    fn events_append_across_calls() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let e = |ms| SessionEvent::new(from_millis(ms), EventKind::EditorFocus);
        store.append_events("d", &[e(1), e(2)]).unwrap();
        store.append_events("d", &[e(3)]).unwrap();
        assert_eq!(store.load_log("d").unwrap().len(), 3);
    }

    #[test]
    fn corrupt_document_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let path = dir.path().join("documents/d/document.json");
        write_atomic(&path, b"{").unwrap();
        assert!(matches!(
            store.load_document("d"),
            Err(StoreError::Corrupt { .. })
        ));
    }
}
