//! Small text utilities shared by the history preview and the feedback
//! structure analyzer: word counting, the sentence splitter and conversions
//! between character and byte offsets.

use std::ops::Range;

/// Number of maximal non-whitespace runs.
pub fn count_words(text: &str) -> usize {
    text.split_whitespace().count()
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Byte ranges of the sentences in `text`.
///
/// A sentence starts at the first non-whitespace character and runs up to and
/// including a `.`, `!` or `?` that is followed by whitespace or the end of the
/// text. Trailing material without a terminator forms a final sentence.
/// Whitespace between sentences belongs to no sentence.
pub fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut chars = text.char_indices().peekable();

    while let Some((i, c)) = chars.next() {
        if start.is_none() {
            if c.is_whitespace() {
                continue;
            }
            start = Some(i);
        }
        if is_terminator(c) {
            let at_boundary = match chars.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace(),
            };
            if at_boundary {
                let s = start.take().expect("open sentence");
                spans.push(s..i + c.len_utf8());
            }
        }
    }
    if let Some(s) = start {
        let end = text.trim_end().len();
        spans.push(s..end);
    }
    spans
}

pub fn sentences(text: &str) -> Vec<&str> {
    sentence_spans(text).into_iter().map(|r| &text[r]).collect()
}

/// The first `limit` sentences of `text`, or the whole text if it has fewer.
pub fn preview(text: &str, limit: usize) -> &str {
    let spans = sentence_spans(text);
    if limit == 0 {
        return "";
    }
    if spans.len() <= limit {
        return text;
    }
    &text[..spans[limit - 1].end]
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Byte offset of the `char_idx`-th character; `char_len(text)` maps to
/// `text.len()`. Returns `None` past the end.
pub fn byte_offset(text: &str, char_idx: usize) -> Option<usize> {
    if char_idx == 0 {
        return Some(0);
    }
    let mut count = 0;
    for (i, _) in text.char_indices() {
        if count == char_idx {
            return Some(i);
        }
        count += 1;
    }
    (count == char_idx).then_some(text.len())
}

/// Substring between two character offsets, if both are in bounds and ordered.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let s = byte_offset(text, start)?;
    let e = byte_offset(text, end)?;
    Some(&text[s..e])
}

pub fn char_index_of_byte(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

/// Collapse `\r\n` and lone `\r` into `\n`.
pub fn canonical_newlines(text: &str) -> String {
    text.replace("\r\n", "\n").replace('\r', "\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_counts() {
        assert_eq!(count_words("Overall, the text snippet is clear."), 6);
        assert_eq!(count_words(""), 0);
        assert_eq!(count_words("  \n\t "), 0);
        let many = vec!["a"; 201].join("\n");
        assert_eq!(count_words(&many), 201);
    }

    #[test]
    fn splits_on_terminator_followed_by_space() {
        let t = "First one. Second one! Third? Tail";
        assert_eq!(
            sentences(t),
            vec!["First one.", "Second one!", "Third?", "Tail"]
        );
    }

    #[test]
    fn decimal_points_and_ellipses_do_not_split() {
        assert_eq!(
            sentences("Version 2.5 is out... Really."),
            vec!["Version 2.5 is out...", "Really."]
        );
    }

    #[test]
    fn leading_and_trailing_whitespace_is_outside_spans() {
        let t = "  One.  Two.\n";
        let spans = sentence_spans(t);
        assert_eq!(spans, vec![2..6, 8..12]);
    }

    #[test]
    fn preview_cuts_after_limit() {
        let t = "A one. B two. C three. D four. E five.";
        assert_eq!(preview(t, 2), "A one. B two.");
        assert_eq!(preview("Only one.", 3), "Only one.");
        assert_eq!(preview("Ok.", 1), "Ok.");
    }

    #[test]
    fn char_offsets_handle_multibyte() {
        let t = "héllo wörld";
        assert_eq!(char_slice(t, 0, 5), Some("héllo"));
        assert_eq!(char_slice(t, 6, 11), Some("wörld"));
        assert_eq!(char_slice(t, 6, 12), None);
        assert_eq!(char_slice(t, 3, 2), None);
        assert_eq!(char_index_of_byte(t, byte_offset(t, 7).unwrap()), 7);
    }

    #[test]
    fn newline_canonicalization() {
        assert_eq!(canonical_newlines("a\r\nb\rc\n"), "a\nb\nc\n");
    }
}
