//! Offline subcommands. Each returns the text the binary prints.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use persona_feedback_core::analytics::SessionLog;
use persona_feedback_core::clock::from_millis;
use persona_feedback_core::prompt::{default_few_shot, parse_few_shot};
use persona_feedback_core::structure::CorpusReport;
use persona_feedback_core::{
    analyze_corpus, assemble, compute_stats, focus_timeline, FeedbackCard, History, Persona,
};

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn pretty<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes")
}

/// Assembled prompt bundle for `persona_file` and `text`, as JSON.
pub fn prompt(
    persona_file: &Path,
    text: &str,
    few_shot: Option<&Path>,
    zero_shot: bool,
) -> anyhow::Result<String> {
    let persona = Persona::from_json(&read(persona_file)?)?;
    let examples = match (zero_shot, few_shot) {
        (true, _) => Vec::new(),
        (false, Some(path)) => parse_few_shot(&read(path)?)?,
        (false, None) => default_few_shot(),
    };
    let bundle = assemble(text, &persona.snapshot_at(persona.updated_at), &examples)?;
    Ok(pretty(&bundle))
}

fn load_log(path: &Path) -> anyhow::Result<SessionLog> {
    SessionLog::from_jsonl(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn stats(log: &Path, document: Option<&Path>) -> anyhow::Result<String> {
    let mut stats = compute_stats(&load_log(log)?);
    if let Some(doc) = document {
        stats = stats.with_final_text(&read(doc)?);
    }
    Ok(pretty(&stats))
}

pub fn timeline(log: &Path, end_ms: Option<i64>, csv: bool) -> anyhow::Result<String> {
    let timeline = focus_timeline(&load_log(log)?, end_ms.map(from_millis));
    Ok(if csv {
        timeline.to_csv()
    } else {
        pretty(&timeline)
    })
}

/// Collect cards from history files, single card files, or directories of
/// either.
pub fn collect_cards(paths: &[PathBuf]) -> anyhow::Result<Vec<FeedbackCard>> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
                .with_context(|| format!("listing {}", path.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("json"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(path.clone());
        }
    }
    let mut cards = Vec::new();
    for file in files {
        let text = read(&file)?;
        if let Ok(history) = History::load(&text) {
            cards.extend(history.cards().iter().cloned());
        } else {
            match FeedbackCard::from_json(&text) {
                Ok(card) => cards.push(card),
                Err(e) => bail!("{} is neither a history nor a card: {e}", file.display()),
            }
        }
    }
    Ok(cards)
}

pub fn analyze(paths: &[PathBuf], table: bool) -> anyhow::Result<String> {
    let report: CorpusReport = analyze_corpus(&collect_cards(paths)?);
    Ok(if table {
        report.table()
    } else {
        pretty(&report)
    })
}
