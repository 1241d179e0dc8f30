use std::collections::BTreeSet;

use super::TokenAlignment;
use crate::error::{Error, Result};
use crate::text::tokenize_words;

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

/// Longest piece produced by [`split_word`], in characters.
pub const MAX_PIECE_CHARS: usize = 5;

/// Deterministic vocabulary-free subword split: the lowercased word in
/// chunks of at most five characters, continuations marked with `##`.
/// `battery` becomes `batte`, `##ry`.
pub fn split_word(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.to_lowercase().chars().collect();
    chars
        .chunks(MAX_PIECE_CHARS)
        .enumerate()
        .map(|(i, c)| {
            let piece: String = c.iter().collect();
            if i == 0 {
                piece
            } else {
                format!("##{piece}")
            }
        })
        .collect()
}

/// `[CLS] pieces... [SEP]` tokenization with word alignment.
#[derive(Clone, Copy, Debug)]
pub struct SubwordTokenizer {
    pub max_subtokens: usize,
}

impl SubwordTokenizer {
    pub fn tokenize(&self, text: &str) -> Result<(TokenAlignment, Vec<String>)> {
        if text.trim().is_empty() {
            return Err(Error::Argument("cannot tokenize empty text".into()));
        }
        let words = tokenize_words(text);
        let mut pieces = vec![CLS.to_string()];
        let mut spans = Vec::with_capacity(words.len());
        for w in &words {
            let start = pieces.len();
            pieces.extend(split_word(&w.text));
            spans.push(start..pieces.len());
        }
        pieces.push(SEP.to_string());
        if pieces.len() > self.max_subtokens {
            return Err(Error::TooLong {
                len: pieces.len(),
                limit: self.max_subtokens,
            });
        }
        let alignment = TokenAlignment {
            words,
            subtoken_spans: spans,
            special_token_indices: BTreeSet::from([0, pieces.len() - 1]),
            n_subtokens: pieces.len(),
        };
        Ok((alignment, pieces))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Span;

    fn tok() -> SubwordTokenizer {
        SubwordTokenizer { max_subtokens: 16 }
    }

    #[test]
    fn great_battery() {
        let (a, pieces) = tok().tokenize("great battery").unwrap();
        assert_eq!(pieces, vec!["[CLS]", "great", "batte", "##ry", "[SEP]"]);
        assert_eq!(
            a.words.iter().map(|w| w.text.as_str()).collect::<Vec<_>>(),
            ["great", "battery"]
        );
        assert_eq!(a.subtoken_spans, vec![1..2, 2..4]);
        assert_eq!(a.special_token_indices, BTreeSet::from([0, 4]));
        assert_eq!(a.word_indices_for_span(Span::new(6, 13)), BTreeSet::from([1]));
        a.validate().unwrap();
    }

    #[test]
    fn single_word() {
        let (a, _) = tok().tokenize("good").unwrap();
        assert_eq!(a.subtoken_spans, vec![1..2]);
    }

    #[test]
    fn too_long_is_an_error() {
        let err = SubwordTokenizer { max_subtokens: 4 }
            .tokenize("great battery")
            .unwrap_err();
        assert!(matches!(err, Error::TooLong { len: 5, limit: 4 }));
    }

    #[test]
    fn empty_text_rejected() {
        assert!(tok().tokenize("   ").is_err());
    }
}
