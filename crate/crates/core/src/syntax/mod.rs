//! POS and dependency annotation, and the opinion-relation patterns that
//! turn an annotated sentence into opinion candidates.

mod conllu;
mod patterns;
mod rules;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{char_len, tokenize_words, Span, Word};

pub use conllu::ConlluAnnotator;
pub use patterns::{
    ArcConstraint, Candidate, CandidateSet, Emit, OpinionRelationPattern, PatternRegistry, DEFAULT_MOD_RELATIONS,
};
pub use rules::RuleAnnotator;

/// Coarse part-of-speech classes the patterns are written against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CoarsePos {
    Noun,
    Propn,
    Adj,
    Adv,
    Adp,
    Verb,
    Other,
}

impl CoarsePos {
    pub const ALL: [CoarsePos; 7] = [
        CoarsePos::Noun,
        CoarsePos::Propn,
        CoarsePos::Adj,
        CoarsePos::Adv,
        CoarsePos::Adp,
        CoarsePos::Verb,
        CoarsePos::Other,
    ];

    /// Maps a Universal Dependencies UPOS tag.
    pub fn from_upos(tag: &str) -> CoarsePos {
        match tag {
            "NOUN" => CoarsePos::Noun,
            "PROPN" => CoarsePos::Propn,
            "ADJ" => CoarsePos::Adj,
            "ADV" => CoarsePos::Adv,
            "ADP" => CoarsePos::Adp,
            "VERB" | "AUX" => CoarsePos::Verb,
            _ => CoarsePos::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CoarsePos::Noun => "NOUN",
            CoarsePos::Propn => "PROPN",
            CoarsePos::Adj => "ADJ",
            CoarsePos::Adv => "ADV",
            CoarsePos::Adp => "ADP",
            CoarsePos::Verb => "VERB",
            CoarsePos::Other => "OTHER",
        }
    }
}

impl fmt::Display for CoarsePos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CoarsePos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CoarsePos::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown POS class `{s}`")))
    }
}

/// One token as reported by an annotator; `start` is a character offset and
/// `head` indexes the annotator's own token list (`None` = root).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotatorToken {
    pub text: String,
    pub start: usize,
    pub pos: CoarsePos,
    pub head: Option<usize>,
    pub deprel: String,
}

impl AnnotatorToken {
    fn span(&self) -> Span {
        Span::new(self.start, self.start + char_len(&self.text))
    }
}

pub trait Annotator: Send + Sync {
    fn name(&self) -> &str;
    /// Identifies the parses this annotator produces.
    fn fingerprint(&self) -> String {
        self.name().to_string()
    }
    fn parse(&self, text: &str) -> Result<Vec<AnnotatorToken>>;
}

/// Word-level POS tags and dependency arcs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxAnnotation {
    pub words: Vec<Word>,
    pub pos: Vec<CoarsePos>,
    /// `None` marks the root.
    pub heads: Vec<Option<usize>>,
    pub deprels: Vec<String>,
}

impl SyntaxAnnotation {
    /// Builds an annotation from word strings (spaced by one blank) and
    /// validates it. Convenient for hand-written parses.
    pub fn from_parts(
        words: &[&str],
        pos: Vec<CoarsePos>,
        heads: Vec<Option<usize>>,
        deprels: &[&str],
    ) -> Result<Self> {
        let text = words.join(" ");
        let tokenized = tokenize_words(&text);
        if tokenized.len() != words.len() {
            return Err(Error::Argument(format!("`{text}` does not split into the given words")));
        }
        let ann = SyntaxAnnotation {
            words: tokenized,
            pos,
            heads,
            deprels: deprels.iter().map(|s| s.to_string()).collect(),
        };
        ann.validate()?;
        Ok(ann)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Equal lengths, in-range heads, at least one root, and no cycles.
    pub fn validate(&self) -> Result<()> {
        let n = self.words.len();
        if self.pos.len() != n || self.heads.len() != n || self.deprels.len() != n {
            return Err(Error::NotATree(format!(
                "{} words, {} tags, {} heads, {} relations",
                n,
                self.pos.len(),
                self.heads.len(),
                self.deprels.len()
            )));
        }
        if n > 0 && self.heads.iter().all(Option::is_some) {
            return Err(Error::NotATree("no root".into()));
        }
        for start in 0..n {
            let mut cur = start;
            for _ in 0..=n {
                match self.heads[cur] {
                    None => break,
                    Some(h) if h >= n => return Err(Error::NotATree(format!("word {cur} has head {h} out of range"))),
                    Some(h) if h == cur => return Err(Error::NotATree(format!("word {cur} heads itself"))),
                    Some(h) => cur = h,
                }
            }
            if self.heads[cur].is_some() {
                return Err(Error::NotATree(format!("cycle through word {start}")));
            }
        }
        Ok(())
    }

    /// Word indices of the subtree rooted at `node`, ascending.
    pub fn subtree(&self, node: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&w| {
                let mut cur = w;
                loop {
                    if cur == node {
                        return true;
                    }
                    match self.heads[cur] {
                        Some(h) => cur = h,
                        None => return false,
                    }
                }
            })
            .collect()
    }
}

/// Aligns annotator tokens to the shared word tokenization. A word covered
/// by several tokens takes the first token's tag, relation and head.
pub fn align_tokens(text: &str, tokens: &[AnnotatorToken]) -> Result<SyntaxAnnotation> {
    let words = tokenize_words(text);
    let tokens: Vec<&AnnotatorToken> = tokens.iter().collect();
    let mut token_word: Vec<Option<usize>> = vec![None; tokens.len()];
    let mut bad = Vec::new();
    for (t, tok) in tokens.iter().enumerate() {
        if tok.text.trim().is_empty() {
            continue;
        }
        let span = tok.span();
        let hits: Vec<usize> = words
            .iter()
            .enumerate()
            .filter(|(_, w)| w.span.overlaps(&span))
            .map(|(i, _)| i)
            .collect();
        match hits.as_slice() {
            [w] => token_word[t] = Some(*w),
            _ => bad.push(tok.start),
        }
    }
    let mut representative = vec![None; words.len()];
    for (t, w) in token_word.iter().enumerate() {
        if let Some(w) = *w {
            representative[w].get_or_insert(t);
        }
    }
    for (w, rep) in representative.iter().enumerate() {
        if rep.is_none() {
            bad.push(words[w].span.from);
        }
    }
    if !bad.is_empty() {
        bad.sort_unstable();
        bad.dedup();
        return Err(Error::Misaligned { offsets: bad });
    }

    let mut pos = Vec::with_capacity(words.len());
    let mut heads = Vec::with_capacity(words.len());
    let mut deprels = Vec::with_capacity(words.len());
    for (w, rep) in representative.iter().enumerate() {
        let t = rep.expect("checked above");
        pos.push(tokens[t].pos);
        deprels.push(tokens[t].deprel.clone());
        // Climb past tokens inside the same word or without a word.
        let mut head = tokens[t].head;
        let mut steps = 0;
        let word_head = loop {
            match head {
                None => break None,
                Some(h) if h >= tokens.len() => return Err(Error::NotATree(format!("token head {h} out of range"))),
                Some(h) => match token_word[h] {
                    Some(hw) if hw != w => break Some(hw),
                    _ => {
                        steps += 1;
                        if steps > tokens.len() {
                            return Err(Error::NotATree("cycle in annotator output".into()));
                        }
                        head = tokens[h].head;
                    }
                },
            }
        };
        heads.push(word_head);
    }
    let ann = SyntaxAnnotation {
        words,
        pos,
        heads,
        deprels,
    };
    ann.validate()?;
    Ok(ann)
}

/// Runs the annotator on a sentence and aligns the result to words.
pub fn annotate(text: &str, annotator: &dyn Annotator) -> Result<SyntaxAnnotation> {
    if text.trim().is_empty() {
        return Err(Error::Argument("cannot annotate an empty sentence".into()));
    }
    let tokens = annotator.parse(text)?;
    align_tokens(text, &tokens)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotatorKind {
    Rules,
    Conllu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorSpec {
    pub kind: AnnotatorKind,
    pub path: Option<PathBuf>,
}

impl Default for AnnotatorSpec {
    fn default() -> Self {
        AnnotatorSpec {
            kind: AnnotatorKind::Rules,
            path: None,
        }
    }
}

impl FromStr for AnnotatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rules" => Ok(AnnotatorKind::Rules),
            "conllu" => Ok(AnnotatorKind::Conllu),
            other => Err(Error::Config(format!("unknown annotator `{other}`"))),
        }
    }
}

pub fn open_annotator(spec: &AnnotatorSpec) -> Result<Arc<dyn Annotator>> {
    Ok(match spec.kind {
        AnnotatorKind::Rules => Arc::new(RuleAnnotator::new()),
        AnnotatorKind::Conllu => {
            let path = spec.path.as_ref().ok_or_else(|| Error::Capability {
                backend: "conllu annotator".into(),
                capability: "parsing without a precomputed CoNLL-U file",
            })?;
            Arc::new(ConlluAnnotator::from_file(path)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use CoarsePos::*;

    fn tok(text: &str, start: usize, pos: CoarsePos, head: Option<usize>, rel: &str) -> AnnotatorToken {
        AnnotatorToken {
            text: text.into(),
            start,
            pos,
            head,
            deprel: rel.into(),
        }
    }

    #[test]
    fn cycle_and_rootless_rejected() {
        assert!(
            SyntaxAnnotation::from_parts(&["a", "b"], vec![Noun, Noun], vec![Some(1), Some(0)], &["x", "y"]).is_err()
        );
        assert!(SyntaxAnnotation::from_parts(&["a"], vec![Noun], vec![Some(0)], &["x"]).is_err());
        assert!(
            SyntaxAnnotation::from_parts(&["a", "b"], vec![Noun, Noun], vec![Some(1), None], &["x", "root"]).is_ok()
        );
    }

    #[test]
    fn finer_tokens_take_first_token() {
        // "don't like" tokenized as do / n't / like
        let text = "don't like";
        let tokens = vec![
            tok("do", 0, Verb, Some(2), "aux"),
            tok("n't", 2, Other, Some(2), "advmod"),
            tok("like", 6, Verb, None, "root"),
        ];
        let ann = align_tokens(text, &tokens).unwrap();
        assert_eq!(ann.words.len(), 2);
        assert_eq!(ann.pos, vec![Verb, Verb]);
        assert_eq!(ann.heads, vec![Some(1), None]);
        assert_eq!(ann.deprels, vec!["aux", "root"]);
    }

    #[test]
    fn head_inside_same_word_climbs() {
        // "wi" "-" "fi" with the first piece headed by the last
        let text = "wi-fi works";
        let tokens = vec![
            tok("wi", 0, Noun, Some(2), "compound"),
            tok("-", 2, Other, Some(2), "punct"),
            tok("fi", 3, Noun, Some(3), "nsubj"),
            tok("works", 6, Verb, None, "root"),
        ];
        let ann = align_tokens(text, &tokens).unwrap();
        assert_eq!(ann.heads, vec![Some(1), None]);
    }

    #[test]
    fn coarse_token_spanning_words_is_misaligned() {
        let text = "New York pizza";
        let tokens = vec![
            tok("New York", 0, Propn, Some(1), "compound"),
            tok("pizza", 9, Noun, None, "root"),
        ];
        match align_tokens(text, &tokens).unwrap_err() {
            Error::Misaligned { offsets } => assert_eq!(offsets, vec![0, 4]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_sentence_is_rejected() {
        assert!(matches!(annotate("  ", &RuleAnnotator::new()), Err(Error::Argument(_))));
    }

    #[test]
    fn subtree_collects_descendants() {
        let ann = SyntaxAnnotation::from_parts(
            &["with", "very", "good", "service"],
            vec![Adp, Adv, Adj, Noun],
            vec![Some(3), Some(2), Some(3), None],
            &["case", "advmod", "amod", "root"],
        )
        .unwrap();
        assert_eq!(ann.subtree(3), vec![0, 1, 2, 3]);
        assert_eq!(ann.subtree(2), vec![1, 2]);
        assert_eq!(ann.subtree(0), vec![0]);
    }
}
