//! Character spans and the word tokenization shared by every module.
//!
//! All offsets are half-open intervals counted in Unicode scalar values
//! (not bytes), which is what the SemEval files use.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Half-open character interval `[from, to)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub from: usize,
    pub to: usize,
}

impl Span {
    pub fn new(from: usize, to: usize) -> Self {
        Span { from, to }
    }

    pub fn len(&self) -> usize {
        self.to.saturating_sub(self.from)
    }

    pub fn is_empty(&self) -> bool {
        self.to <= self.from
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.from < other.to && other.from < self.to
    }

    pub fn within(&self, len_chars: usize) -> bool {
        self.from < self.to && self.to <= len_chars
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.from, self.to)
    }
}

pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Substring by character interval; `None` when the interval is out of bounds.
pub fn slice_chars(text: &str, span: Span) -> Option<&str> {
    if span.from > span.to {
        return None;
    }
    let mut start = None;
    let mut end = None;
    for (ci, (bi, _)) in text.char_indices().enumerate() {
        if ci == span.from {
            start = Some(bi);
        }
        if ci == span.to {
            end = Some(bi);
            break;
        }
    }
    let n = char_len(text);
    if span.from == n {
        start = Some(text.len());
    }
    if span.to == n {
        end = Some(text.len());
    }
    Some(&text[start?..end?])
}

/// One word of a sentence with its character span.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Word {
    pub text: String,
    pub span: Span,
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '-' | '.' | ',')
}

/// Splits raw text into words: alphanumeric runs (allowing a single internal
/// apostrophe, hyphen, or numeric separator) and single punctuation marks.
pub fn tokenize_words(text: &str) -> Vec<Word> {
    let chars: Vec<char> = text.chars().collect();
    let mut words = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if !c.is_alphanumeric() {
            words.push(Word {
                text: c.to_string(),
                span: Span::new(i, i + 1),
            });
            i += 1;
            continue;
        }
        let start = i;
        i += 1;
        while i < chars.len() {
            if chars[i].is_alphanumeric() {
                i += 1;
            } else if is_joiner(chars[i])
                && i + 1 < chars.len()
                && chars[i + 1].is_alphanumeric()
                && joins(chars[i], chars[i - 1], chars[i + 1])
            {
                i += 2;
            } else {
                break;
            }
        }
        words.push(Word {
            text: chars[start..i].iter().collect(),
            span: Span::new(start, i),
        });
    }
    words
}

fn joins(joiner: char, prev: char, next: char) -> bool {
    match joiner {
        // "3.5", "1,000"
        '.' | ',' => prev.is_ascii_digit() && next.is_ascii_digit(),
        _ => true,
    }
}

/// Indices of the words overlapping a character interval.
pub fn words_in_span(words: &[Word], span: Span) -> BTreeSet<usize> {
    words
        .iter()
        .enumerate()
        .filter(|(_, w)| w.span.overlaps(&span))
        .map(|(i, _)| i)
        .collect()
}

/// Surface text of a set of words: the exact substring when the words are
/// contiguous, otherwise the words joined by single spaces.
pub fn phrase_text(text: &str, words: &[Word], indices: &[usize]) -> String {
    if indices.is_empty() {
        return String::new();
    }
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let contiguous = sorted.windows(2).all(|w| w[1] == w[0] + 1);
    if contiguous {
        let span = Span::new(words[sorted[0]].span.from, words[*sorted.last().unwrap()].span.to);
        if let Some(s) = slice_chars(text, span) {
            return s.to_string();
        }
    }
    sorted
        .iter()
        .map(|&i| words[i].text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(s: &str) -> Vec<String> {
        tokenize_words(s).into_iter().map(|w| w.text).collect()
    }

    #[test]
    fn splits_punctuation_and_keeps_contractions() {
        assert_eq!(
            texts("The fajitas aren't great, but the wi-fi is."),
            vec!["The", "fajitas", "aren't", "great", ",", "but", "the", "wi-fi", "is", "."]
        );
        assert_eq!(texts("costs 3.5 dollars."), vec!["costs", "3.5", "dollars", "."]);
    }

    #[test]
    fn spans_are_character_offsets() {
        let words = tokenize_words("café great");
        assert_eq!(words[1].span, Span::new(5, 10));
        assert_eq!(slice_chars("café great", words[1].span), Some("great"));
    }

    #[test]
    fn span_to_word_indices() {
        let words = tokenize_words("great battery");
        assert_eq!(words_in_span(&words, Span::new(6, 13)), BTreeSet::from([1]));
        assert_eq!(words_in_span(&words, Span::new(0, 13)), BTreeSet::from([0, 1]));
    }

    #[test]
    fn slice_bounds() {
        assert_eq!(slice_chars("abc", Span::new(0, 3)), Some("abc"));
        assert_eq!(slice_chars("abc", Span::new(3, 3)), Some(""));
        assert_eq!(slice_chars("abc", Span::new(2, 4)), None);
    }

    #[test]
    fn phrase_text_contiguous_and_gapped() {
        let s = "very  good screen";
        let words = tokenize_words(s);
        assert_eq!(phrase_text(s, &words, &[0, 1]), "very  good");
        assert_eq!(phrase_text(s, &words, &[2, 0]), "very screen");
    }
}
