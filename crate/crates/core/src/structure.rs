//! Lexical analyzer for generated feedback.
//!
//! Feedback from the personas tends to follow one scheme: an opening in which
//! the persona introduces itself ("As a reviewer, ..."), a main part with
//! advice, and a closing summary ("Overall, the text snippet ..."). This module
//! cuts a text into those blocks and tags the main part with coarse advice
//! labels. It is a keyword heuristic; the fixture corpus under `tests/` is its
//! contract.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::WORD_LIMIT;
use crate::history::FeedbackCard;
use crate::text::{self, char_index_of_byte, count_words};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StructureError {
    #[error("feedback text is empty")]
    EmptyText,
}

/// Half-open character range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        text::char_slice(text, self.start, self.end).unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackBlocks {
    pub opening: Option<Span>,
    pub main: Span,
    pub summary: Option<Span>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MainLabel {
    MoreExamples,
    TopicContent,
    Clarification,
    MoreDetails,
    StyleImprovement,
    ConcreteSuggestion,
    PositiveRemark,
}

impl MainLabel {
    pub const ALL: [MainLabel; 7] = [
        MainLabel::MoreExamples,
        MainLabel::TopicContent,
        MainLabel::Clarification,
        MainLabel::MoreDetails,
        MainLabel::StyleImprovement,
        MainLabel::ConcreteSuggestion,
        MainLabel::PositiveRemark,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MainLabel::MoreExamples => "more_examples",
            MainLabel::TopicContent => "topic_content",
            MainLabel::Clarification => "clarification",
            MainLabel::MoreDetails => "more_details",
            MainLabel::StyleImprovement => "style_improvement",
            MainLabel::ConcreteSuggestion => "concrete_suggestion",
            MainLabel::PositiveRemark => "positive_remark",
        }
    }
}

pub type MainPartLabels = BTreeSet<MainLabel>;

const SUMMARY_MARKERS: [&str; 3] = ["overall", "in summary", "in conclusion"];
const STYLE_PHRASES: [&str; 5] = [
    "shorter sentences",
    "simpler",
    "easier language",
    "terminology",
    "writing style",
];
const POSITIVE_PHRASES: [&str; 5] = ["i value", "well written", "clear and", "good job", "strong"];

/// `lower` starts with `phrase` and the phrase ends at a word boundary.
fn starts_with_word(lower: &str, phrase: &str) -> bool {
    lower.starts_with(phrase)
        && lower[phrase.len()..]
            .chars()
            .next()
            .is_none_or(|c| !c.is_alphanumeric())
}

/// `phrase` occurs in `lower` starting at a word boundary.
fn contains_from_word_start(lower: &str, phrase: &str) -> bool {
    lower.match_indices(phrase).any(|(i, _)| {
        lower[..i]
            .chars()
            .next_back()
            .is_none_or(|c| !c.is_alphanumeric())
    })
}

fn is_opening(sentence: &str) -> bool {
    let lower = sentence.to_lowercase();
    starts_with_word(&lower, "as a") || starts_with_word(&lower, "as an")
}

fn is_summary_start(sentence: &str) -> bool {
    let lower = sentence.to_lowercase();
    SUMMARY_MARKERS.iter().any(|m| starts_with_word(&lower, m))
}

/// Split feedback into opening, main part and summary.
pub fn segment(text: &str) -> Result<FeedbackBlocks, StructureError> {
    if text.trim().is_empty() {
        return Err(StructureError::EmptyText);
    }
    let sentences = text::sentence_spans(text);
    let to_chars = |b: usize| char_index_of_byte(text, b);

    let opening_idx = sentences
        .first()
        .filter(|r| is_opening(&text[(*r).clone()]))
        .map(|_| 0usize);
    let first_candidate = opening_idx.map_or(0, |i| i + 1);
    let summary_idx = (first_candidate..sentences.len())
        .rev()
        .find(|&i| is_summary_start(&text[sentences[i].clone()]));

    let main_from = opening_idx.map_or(0, |i| sentences[i].end);
    let main_to = summary_idx.map_or(text.len(), |i| sentences[i].start);
    let gap = &text[main_from..main_to];
    let lead = gap.len() - gap.trim_start().len();
    let trimmed = gap.trim();
    let main = if trimmed.is_empty() {
        Span {
            start: to_chars(main_from),
            end: to_chars(main_from),
        }
    } else {
        let s = main_from + lead;
        Span {
            start: to_chars(s),
            end: to_chars(s + trimmed.len()),
        }
    };

    Ok(FeedbackBlocks {
        opening: opening_idx.map(|i| Span {
            start: to_chars(sentences[i].start),
            end: to_chars(sentences[i].end),
        }),
        main,
        summary: summary_idx.map(|i| Span {
            start: to_chars(sentences[i].start),
            end: to_chars(text.trim_end().len()),
        }),
    })
}

fn tokens(sentence: &str) -> Vec<&str> {
    sentence
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect()
}

/// True if some token matching `target` is preceded in the same sentence by a
/// token matching `before`.
fn preceded_by(
    tokens: &[&str],
    target: impl Fn(&str) -> bool,
    before: impl Fn(&str) -> bool,
) -> bool {
    tokens
        .iter()
        .enumerate()
        .any(|(i, t)| target(t) && tokens[..i].iter().any(|b| before(b)))
}

/// Advice labels for the main part of a feedback text.
pub fn label_main(main: &str) -> MainPartLabels {
    let mut labels = MainPartLabels::new();
    let lower = main.to_lowercase();
    if lower.trim().is_empty() {
        return labels;
    }

    if lower.contains("for example, instead of") || contains_from_word_start(&lower, "could write")
    {
        labels.insert(MainLabel::ConcreteSuggestion);
    }
    if lower.contains("clarif") {
        labels.insert(MainLabel::Clarification);
    }
    if STYLE_PHRASES
        .iter()
        .any(|p| contains_from_word_start(&lower, p))
    {
        labels.insert(MainLabel::StyleImprovement);
    }
    if POSITIVE_PHRASES
        .iter()
        .any(|p| contains_from_word_start(&lower, p))
    {
        labels.insert(MainLabel::PositiveRemark);
    }

    let adds = |t: &str| t.starts_with("add") || t.starts_with("includ") || t == "more";
    for sentence in text::sentences(&lower) {
        let toks = tokens(sentence);
        if preceded_by(&toks, |t| t == "example" || t == "examples", adds) {
            labels.insert(MainLabel::MoreExamples);
        }
        let has_detail = toks.iter().any(|t| t.starts_with("detail"));
        if has_detail && toks.iter().any(|t| t == &"more" || t.starts_with("add")) {
            labels.insert(MainLabel::MoreDetails);
        }
        if preceded_by(
            &toks,
            |t| t == "about" || t == "on",
            |t| t.starts_with("add"),
        ) {
            labels.insert(MainLabel::TopicContent);
        }
    }
    labels
}

// ---------------------------------------------------------------------------
// Corpus report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub blocks: FeedbackBlocks,
    pub labels: MainPartLabels,
    pub word_count: usize,
    pub over_limit: bool,
}

pub fn annotate(id: impl Into<String>, text: &str) -> Result<Annotation, StructureError> {
    let blocks = segment(text)?;
    let word_count = count_words(text);
    Ok(Annotation {
        id: id.into(),
        labels: label_main(blocks.main.slice(text)),
        blocks,
        word_count,
        over_limit: word_count > WORD_LIMIT,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WordCountSummary {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub total: usize,
    pub label_counts: BTreeMap<MainLabel, usize>,
    pub with_opening: usize,
    pub with_summary: usize,
    pub opening_share: f64,
    pub summary_share: f64,
    pub word_counts: WordCountSummary,
    pub over_limit: usize,
    pub over_limit_rate: f64,
    pub cards: Vec<Annotation>,
}

impl CorpusReport {
    pub fn from_annotations(cards: Vec<Annotation>) -> Self {
        let total = cards.len();
        let mut label_counts: BTreeMap<MainLabel, usize> =
            MainLabel::ALL.iter().map(|l| (*l, 0)).collect();
        for a in &cards {
            for l in &a.labels {
                *label_counts.entry(*l).or_default() += 1;
            }
        }
        let share = |n: usize| {
            if total == 0 {
                0.0
            } else {
                n as f64 / total as f64
            }
        };
        let with_opening = cards.iter().filter(|a| a.blocks.opening.is_some()).count();
        let with_summary = cards.iter().filter(|a| a.blocks.summary.is_some()).count();
        let over_limit = cards.iter().filter(|a| a.over_limit).count();

        let mut counts: Vec<usize> = cards.iter().map(|a| a.word_count).collect();
        counts.sort_unstable();
        let word_counts = if counts.is_empty() {
            WordCountSummary::default()
        } else {
            let n = counts.len();
            let median = if n % 2 == 1 {
                counts[n / 2] as f64
            } else {
                (counts[n / 2 - 1] + counts[n / 2]) as f64 / 2.0
            };
            WordCountSummary {
                min: counts[0],
                max: counts[n - 1],
                mean: counts.iter().sum::<usize>() as f64 / n as f64,
                median,
            }
        };

        Self {
            total,
            label_counts,
            with_opening,
            with_summary,
            opening_share: share(with_opening),
            summary_share: share(with_summary),
            word_counts,
            over_limit,
            over_limit_rate: share(over_limit),
            cards,
        }
    }

    /// Plain-text counts table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<22} {:>6}", "feedback texts", self.total);
        let _ = writeln!(
            out,
            "{:<22} {:>6}  ({:.2})",
            "with opening", self.with_opening, self.opening_share
        );
        let _ = writeln!(
            out,
            "{:<22} {:>6}  ({:.2})",
            "with summary", self.with_summary, self.summary_share
        );
        let _ = writeln!(
            out,
            "{:<22} {:>6}  ({:.2})",
            "over word limit", self.over_limit, self.over_limit_rate
        );
        let _ = writeln!(
            out,
            "{:<22} min {} / median {:.1} / mean {:.1} / max {}",
            "word count",
            self.word_counts.min,
            self.word_counts.median,
            self.word_counts.mean,
            self.word_counts.max
        );
        for (label, n) in &self.label_counts {
            let _ = writeln!(out, "{:<22} {:>6}", label.as_str(), n);
        }
        out
    }
}

pub fn analyze_texts<'a>(
    texts: impl IntoIterator<Item = (String, &'a str)>,
) -> Result<CorpusReport, StructureError> {
    let cards = texts
        .into_iter()
        .map(|(id, t)| annotate(id, t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CorpusReport::from_annotations(cards))
}

pub fn analyze_corpus(cards: &[FeedbackCard]) -> CorpusReport {
    analyze_texts(
        cards
            .iter()
            .map(|c| (c.id().to_string(), c.feedback().text())),
    )
    .expect("feedback cards never hold empty text")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(ls: &[MainLabel]) -> MainPartLabels {
        ls.iter().copied().collect()
    }

    #[test]
    fn three_block_example() {
        let t = "As a reviewer, I value clarity. Add data. Overall, the text snippet is promising.";
        let b = segment(t).unwrap();
        assert_eq!(
            b.opening.unwrap().slice(t),
            "As a reviewer, I value clarity."
        );
        assert_eq!(b.main.slice(t), "Add data.");
        assert_eq!(
            b.summary.unwrap().slice(t),
            "Overall, the text snippet is promising."
        );
    }

    #[test]
    fn no_markers_means_all_main() {
        let t = "Add more data.";
        let b = segment(t).unwrap();
        assert_eq!(b.opening, None);
        assert_eq!(b.summary, None);
        assert_eq!(
            b.main,
            Span {
                start: 0,
                end: t.chars().count()
            }
        );
    }

    #[test]
    fn in_conclusion_summary() {
        let t = "The intro is long. In conclusion, revise the intro.";
        let b = segment(t).unwrap();
        assert_eq!(
            b.summary.unwrap().slice(t),
            "In conclusion, revise the intro."
        );
        assert_eq!(b.main.slice(t), "The intro is long.");
    }

    #[test]
    fn summary_runs_to_the_end_from_last_marker() {
        let t = "As an editor, hi. Overall, early remark. Middle. In summary, one. Two.";
        let b = segment(t).unwrap();
        assert_eq!(b.summary.unwrap().slice(t), "In summary, one. Two.");
        assert_eq!(b.main.slice(t), "Overall, early remark. Middle.");
    }

    #[test]
    fn marker_needs_word_boundary() {
        let b = segment("Overallness is a word. As an aside.").unwrap();
        assert_eq!(b.summary, None);
        assert_eq!(b.opening, None);
        assert!(segment("Asa is a name.").unwrap().opening.is_none());
    }

    #[test]
    fn empty_text_is_an_error() {
        assert_eq!(segment(""), Err(StructureError::EmptyText));
        assert_eq!(segment("  \n"), Err(StructureError::EmptyText));
    }

    #[test]
    fn opening_and_summary_only() {
        let t = "As a student, I liked it. Overall, the text snippet is fine.";
        let b = segment(t).unwrap();
        assert!(b.main.is_empty());
        assert!(b.opening.unwrap().end <= b.main.start);
        assert!(b.main.end <= b.summary.unwrap().start);
    }

    #[test]
    fn multibyte_offsets_are_characters() {
        let t = "As a café owner, I like it. Überall fine. Overall, good.";
        let b = segment(t).unwrap();
        assert_eq!(b.main.slice(t), "Überall fine.");
        assert_eq!(b.summary.unwrap().end, t.chars().count());
    }

    #[test]
    fn concrete_suggestion_pattern() {
        assert_eq!(
            label_main("For example, instead of X, the author could write Y."),
            labels(&[MainLabel::ConcreteSuggestion])
        );
    }

    #[test]
    fn empty_main_has_no_labels() {
        assert!(label_main("").is_empty());
    }

    #[test]
    fn clarify_and_examples() {
        assert_eq!(
            label_main("Please clarify the second claim and add more examples."),
            labels(&[MainLabel::Clarification, MainLabel::MoreExamples])
        );
    }

    #[test]
    fn example_without_request_is_not_more_examples() {
        assert!(!label_main("This example works.").contains(&MainLabel::MoreExamples));
        assert!(!label_main("An example. Add data.").contains(&MainLabel::MoreExamples));
    }

    #[test]
    fn topic_details_style_positive() {
        assert_eq!(
            label_main("You could add a paragraph about costs."),
            labels(&[MainLabel::TopicContent])
        );
        assert_eq!(
            label_main("I would like more details on the method."),
            labels(&[MainLabel::MoreDetails])
        );
        assert_eq!(
            label_main("Use shorter sentences."),
            labels(&[MainLabel::StyleImprovement])
        );
        assert_eq!(
            label_main("The argument is well written."),
            labels(&[MainLabel::PositiveRemark])
        );
        assert!(label_main("It is unclear and vague.").is_empty());
    }

    #[test]
    fn empty_corpus_report() {
        let r = analyze_texts(Vec::<(String, &str)>::new()).unwrap();
        assert_eq!(r.total, 0);
        assert_eq!(r.summary_share, 0.0);
        assert!(r.label_counts.values().all(|n| *n == 0));
        assert_eq!(r.label_counts.len(), 7);
    }

    #[test]
    fn corpus_shares() {
        let texts = [
            "As a reader, ok. Overall, good.",
            "Fine. In summary, good.",
            "Nice. In conclusion, good.",
        ];
        let r = analyze_texts(texts.iter().enumerate().map(|(i, t)| (i.to_string(), *t))).unwrap();
        assert_eq!(r.with_summary, 3);
        assert_eq!(r.summary_share, 1.0);
        assert_eq!(r.with_opening, 1);
        assert_eq!(r.word_counts.min, 4);
        assert!(r.table().contains("with summary"));
    }

    #[test]
    fn over_limit_in_annotation() {
        let long = vec!["w"; 201].join(" ");
        assert!(annotate("x", &long).unwrap().over_limit);
        let ok = vec!["w"; 200].join(" ");
        assert!(!annotate("x", &ok).unwrap().over_limit);
    }
}
