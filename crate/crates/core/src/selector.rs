//! Attention-guided opinion selection.
//!
//! The aspect's subtokens act as queries. For every layer and head, the
//! attention rows of those subtokens are averaged and the columns of each
//! word's subtokens summed, giving one score per word. Scores are averaged
//! over heads, then over layers, and the highest-scoring candidate opinion
//! head wins.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{AttentionView, Encoder, TokenAlignment};
use crate::corpus::{AspectInstance, RawSentence};
use crate::error::{Error, Result};
use crate::syntax::{annotate, Annotator, CandidateSet, CoarsePos, PatternRegistry, SyntaxAnnotation};
use crate::text::phrase_text;

/// Layers read by default: the first four.
pub const DEFAULT_LAYERS: [usize; 4] = [0, 1, 2, 3];

/// How per-layer scores are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    /// Mean over layers, then one argmax.
    #[default]
    Pool,
    /// One masked argmax per layer; the most-voted head wins, ties go to the
    /// pooled score and then to the tie-break rule.
    Vote,
}

impl FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pool" => Ok(AggregationMode::Pool),
            "vote" => Ok(AggregationMode::Vote),
            other => Err(Error::Config(format!("unknown aggregation `{other}`"))),
        }
    }
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregationMode::Pool => "pool",
            AggregationMode::Vote => "vote",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieBreak {
    #[default]
    Lowest,
    Highest,
}

impl FromStr for TieBreak {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "lowest" => Ok(TieBreak::Lowest),
            "highest" => Ok(TieBreak::Highest),
            other => Err(Error::Config(format!("unknown tie-break rule `{other}`"))),
        }
    }
}

/// Word-level attention from the aspect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AspectQueryScores {
    /// Mean over layers of the per-layer head means.
    pub scores: Vec<f64>,
    /// Head-mean word scores of each layer, in `layers_used` order.
    pub per_layer: Vec<Vec<f64>>,
    pub layers_used: Vec<usize>,
    pub aggregation: AggregationMode,
}

impl AspectQueryScores {
    pub fn describe(&self) -> String {
        format!(
            "query=aspect-subtoken-mean key=word-subtoken-sum heads=mean layers={}:{:?}",
            self.aggregation, self.layers_used
        )
    }
}

/// Aggregates attention into one non-negative score per word.
pub fn aspect_scores(
    attn: &AttentionView,
    alignment: &TokenAlignment,
    aspect_words: &BTreeSet<usize>,
) -> Result<AspectQueryScores> {
    let n_words = alignment.n_words();
    if aspect_words.is_empty() {
        return Err(Error::Argument("aspect covers no words".into()));
    }
    if let Some(&w) = aspect_words.iter().find(|&&w| w >= n_words) {
        return Err(Error::Argument(format!(
            "aspect word {w} out of range ({n_words} words)"
        )));
    }
    if attn.n_subtokens() != alignment.n_subtokens {
        return Err(Error::Consistency(format!(
            "attention over {} subtokens, alignment over {}",
            attn.n_subtokens(),
            alignment.n_subtokens
        )));
    }
    let special = &alignment.special_token_indices;
    let rows: Vec<usize> = aspect_words
        .iter()
        .flat_map(|&w| alignment.subtoken_spans[w].clone())
        .filter(|i| !special.contains(i))
        .collect();
    if rows.is_empty() {
        return Err(Error::Consistency("aspect words have no subtokens".into()));
    }
    let columns: Vec<Vec<usize>> = alignment
        .subtoken_spans
        .iter()
        .map(|r| r.clone().filter(|c| !special.contains(c)).collect())
        .collect();

    let mut per_layer = Vec::with_capacity(attn.heads.len());
    for layer in &attn.heads {
        let mut acc = vec![0.0; n_words];
        for m in layer {
            for (w, cols) in columns.iter().enumerate() {
                let mut total = 0.0;
                for &c in cols {
                    let mut col_mean = 0.0;
                    for &r in &rows {
                        col_mean += m.get(r, c);
                    }
                    total += col_mean / rows.len() as f64;
                }
                acc[w] += total;
            }
        }
        let heads = layer.len().max(1) as f64;
        per_layer.push(acc.into_iter().map(|v| v / heads).collect::<Vec<f64>>());
    }
    let n_layers = per_layer.len().max(1) as f64;
    let scores = (0..n_words)
        .map(|w| per_layer.iter().map(|l| l[w]).sum::<f64>() / n_layers)
        .collect();
    Ok(AspectQueryScores {
        scores,
        per_layer,
        layers_used: attn.layers.clone(),
        aggregation: AggregationMode::Pool,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    #[default]
    None,
    /// No pattern candidate; the best adjective or adverb was taken.
    PosFallback,
    /// Nothing to pick; polarity falls back to the whole sentence.
    SentenceFallback,
}

impl fmt::Display for Fallback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fallback::None => "none",
            Fallback::PosFallback => "pos_fallback",
            Fallback::SentenceFallback => "sentence_fallback",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpinionPrediction {
    pub phrase: Vec<usize>,
    pub head: Option<usize>,
    pub text: String,
    pub score: f64,
    pub fallback: Fallback,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    pub layers: Vec<usize>,
    pub aggregation: AggregationMode,
    pub tie_break: TieBreak,
    /// Try adjectives and adverbs before giving up on a sentence.
    pub pos_fallback: bool,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            layers: DEFAULT_LAYERS.to_vec(),
            aggregation: AggregationMode::Pool,
            tie_break: TieBreak::Lowest,
            pos_fallback: true,
        }
    }
}

/// Index of the largest score among `allowed`, ties broken by `tie`.
pub fn masked_argmax(scores: &[f64], allowed: &BTreeSet<usize>, tie: TieBreak) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &i in allowed {
        let Some(&s) = scores.get(i) else { continue };
        best = match best {
            None => Some(i),
            Some(b) if s > scores[b] || (s == scores[b] && tie == TieBreak::Highest) => Some(i),
            keep => keep,
        };
    }
    best
}

fn vote(scores: &AspectQueryScores, allowed: &BTreeSet<usize>, tie: TieBreak) -> Option<usize> {
    let mut votes = vec![0usize; scores.scores.len()];
    for layer in &scores.per_layer {
        if let Some(w) = masked_argmax(layer, allowed, tie) {
            votes[w] += 1;
        }
    }
    let top = allowed.iter().map(|&w| votes.get(w).copied().unwrap_or(0)).max()?;
    let leaders: BTreeSet<usize> = allowed
        .iter()
        .copied()
        .filter(|&w| votes.get(w) == Some(&top))
        .collect();
    masked_argmax(&scores.scores, &leaders, tie)
}

/// What selection needs to know about the sentence.
#[derive(Clone, Copy, Debug)]
pub struct SelectionContext<'a> {
    pub sentence: &'a str,
    pub annotation: &'a SyntaxAnnotation,
    /// Words of the aspect itself; never selected.
    pub aspect_words: &'a BTreeSet<usize>,
}

/// Picks the candidate head with the highest score, falling back to the
/// best adjective or adverb, then to the whole sentence.
pub fn select_opinion(
    scores: &AspectQueryScores,
    candidates: &CandidateSet,
    ctx: SelectionContext<'_>,
    config: &SelectorConfig,
) -> OpinionPrediction {
    let candidates = candidates.excluding(ctx.aspect_words);
    let pick = |allowed: &BTreeSet<usize>| match config.aggregation {
        AggregationMode::Pool => masked_argmax(&scores.scores, allowed, config.tie_break),
        AggregationMode::Vote => vote(scores, allowed, config.tie_break),
    };
    let words = &ctx.annotation.words;
    if let Some(head) = pick(&candidates.mask) {
        let phrase = candidates.get(head).expect("mask mirrors candidates").phrase.clone();
        return OpinionPrediction {
            text: phrase_text(ctx.sentence, words, &phrase),
            phrase,
            head: Some(head),
            score: scores.scores[head],
            fallback: Fallback::None,
        };
    }
    if config.pos_fallback {
        let pool: BTreeSet<usize> = (0..ctx.annotation.len())
            .filter(|w| !ctx.aspect_words.contains(w))
            .filter(|&w| matches!(ctx.annotation.pos[w], CoarsePos::Adj | CoarsePos::Adv))
            .collect();
        if let Some(head) = pick(&pool) {
            return OpinionPrediction {
                text: phrase_text(ctx.sentence, words, &[head]),
                phrase: vec![head],
                head: Some(head),
                score: scores.scores[head],
                fallback: Fallback::PosFallback,
            };
        }
    }
    OpinionPrediction {
        phrase: Vec::new(),
        head: None,
        text: String::new(),
        score: 0.0,
        fallback: Fallback::SentenceFallback,
    }
}

/// One sentence prepared for extraction: annotated, tokenized and with its
/// attention read once, shared by all of its aspects.
#[derive(Clone, Debug)]
pub struct PreparedSentence {
    pub text: String,
    pub annotation: SyntaxAnnotation,
    pub candidates: CandidateSet,
    pub alignment: TokenAlignment,
    pub attention: AttentionView,
}

impl PreparedSentence {
    pub fn new(
        text: &str,
        encoder: &dyn Encoder,
        annotator: &dyn Annotator,
        patterns: &PatternRegistry,
        layers: &[usize],
    ) -> Result<Self> {
        let annotation = annotate(text, annotator)?;
        let candidates = patterns.extract_candidates(&annotation);
        let alignment = encoder.tokenize_with_alignment(text)?;
        if alignment.words != annotation.words {
            return Err(Error::Consistency(format!(
                "encoder and annotator disagree on the words of `{text}`"
            )));
        }
        let attention = encoder.attention_maps(text, layers)?;
        Ok(PreparedSentence {
            text: text.to_string(),
            annotation,
            candidates,
            alignment,
            attention,
        })
    }

    pub fn aspect_words(&self, instance: &AspectInstance) -> Result<BTreeSet<usize>> {
        let words = self.alignment.word_indices_for_span(instance.aspect_span);
        if words.is_empty() {
            return Err(Error::Consistency(format!(
                "aspect `{}` at {} covers no word",
                instance.aspect_text, instance.aspect_span
            )));
        }
        Ok(words)
    }

    pub fn extract(&self, instance: &AspectInstance, config: &SelectorConfig) -> Result<Extraction> {
        let aspect_words = self.aspect_words(instance)?;
        let mut scores = aspect_scores(&self.attention, &self.alignment, &aspect_words)?;
        scores.aggregation = config.aggregation;
        let prediction = select_opinion(
            &scores,
            &self.candidates,
            SelectionContext {
                sentence: &self.text,
                annotation: &self.annotation,
                aspect_words: &aspect_words,
            },
            config,
        );
        Ok(Extraction {
            prediction,
            scores,
            aspect_words,
        })
    }
}

/// A prediction with the evidence behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct Extraction {
    pub prediction: OpinionPrediction,
    pub scores: AspectQueryScores,
    pub aspect_words: BTreeSet<usize>,
}

/// Annotate, propose candidates, read attention, and select, for one aspect.
pub fn extract_opinion(
    sentence: &RawSentence,
    instance: &AspectInstance,
    encoder: &dyn Encoder,
    annotator: &dyn Annotator,
    patterns: &PatternRegistry,
    config: &SelectorConfig,
) -> Result<Extraction> {
    if instance.sentence_id != sentence.id {
        return Err(Error::Argument(format!(
            "aspect belongs to sentence {}, not {}",
            instance.sentence_id, sentence.id
        )));
    }
    PreparedSentence::new(&sentence.text, encoder, annotator, patterns, &config.layers)?.extract(instance, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Matrix, MockEncoder};
    use crate::corpus::fixtures::{located, sentence};
    use crate::corpus::Split;
    use crate::syntax::{Candidate, RuleAnnotator};
    use crate::text::tokenize_words;
    use proptest::prelude::*;

    fn scores_of(v: Vec<f64>) -> AspectQueryScores {
        AspectQueryScores {
            per_layer: vec![v.clone()],
            scores: v,
            layers_used: vec![0],
            aggregation: AggregationMode::Pool,
        }
    }

    fn flat_annotation(n: usize, pos: CoarsePos) -> SyntaxAnnotation {
        let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let heads = (0..n).map(|i| if i == 0 { None } else { Some(0) }).collect();
        SyntaxAnnotation::from_parts(&refs, vec![pos; n], heads, &vec!["dep"; n]).unwrap()
    }

    fn single_word_candidates(heads: &[usize]) -> CandidateSet {
        CandidateSet::from_candidates(
            heads
                .iter()
                .map(|&h| Candidate {
                    phrase: vec![h],
                    head: h,
                    pattern: "P1".into(),
                })
                .collect(),
        )
    }

    fn select(scores: Vec<f64>, heads: &[usize]) -> OpinionPrediction {
        let n = scores.len();
        let ann = flat_annotation(n, CoarsePos::Noun);
        let text = ann.words.iter().map(|w| w.text.as_str()).collect::<Vec<_>>().join(" ");
        select_opinion(
            &scores_of(scores),
            &single_word_candidates(heads),
            SelectionContext {
                sentence: &text,
                annotation: &ann,
                aspect_words: &BTreeSet::new(),
            },
            &SelectorConfig::default(),
        )
    }

    /// Word-level attention where every subtoken is its own word.
    fn view(layers: Vec<Vec<Vec<Vec<f64>>>>) -> AttentionView {
        let heads = layers
            .into_iter()
            .map(|l| l.into_iter().map(|h| Matrix::from_rows(h).unwrap()).collect())
            .collect::<Vec<Vec<Matrix>>>();
        let n_layers = heads.len();
        AttentionView::new((0..n_layers).collect(), heads[0].len(), 1, heads).unwrap()
    }

    fn identity_alignment(n: usize) -> TokenAlignment {
        let words = tokenize_words(&(0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "));
        TokenAlignment {
            words,
            subtoken_spans: (0..n).map(|i| i..i + 1).collect(),
            special_token_indices: BTreeSet::new(),
            n_subtokens: n,
        }
    }

    #[test]
    fn head_mean() {
        let a = vec![vec![0.1, 0.9], vec![0.5, 0.5]];
        let b = vec![vec![0.7, 0.3], vec![0.5, 0.5]];
        let s = aspect_scores(&view(vec![vec![a, b]]), &identity_alignment(2), &BTreeSet::from([0])).unwrap();
        assert!((s.scores[0] - 0.4).abs() < 1e-15);
        assert!((s.scores[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn layer_mean() {
        let l0 = vec![vec![vec![0.4, 0.6], vec![0.5, 0.5]]];
        let l1 = vec![vec![vec![0.8, 0.2], vec![0.5, 0.5]]];
        let s = aspect_scores(&view(vec![l0, l1]), &identity_alignment(2), &BTreeSet::from([0])).unwrap();
        assert!((s.scores[0] - 0.6).abs() < 1e-15);
        assert!((s.scores[1] - 0.4).abs() < 1e-15);
        assert_eq!(s.per_layer.len(), 2);
    }

    #[test]
    fn special_columns_are_ignored() {
        let m = MockEncoder::new(4);
        let text = "great battery";
        let alignment = m.tokenize_with_alignment(text).unwrap();
        let attn = m.attention_maps(text, &[0]).unwrap();
        let s = aspect_scores(&attn, &alignment, &BTreeSet::from([1])).unwrap();
        // word columns only: everything but [CLS] and [SEP]
        let mut expected = [0.0; 2];
        for h in &attn.heads[0] {
            let rows = [2, 3];
            for (w, cols) in [vec![1], vec![2, 3]].iter().enumerate() {
                for &c in cols {
                    expected[w] += rows.iter().map(|&r| h.get(r, c)).sum::<f64>() / 2.0;
                }
            }
        }
        for w in 0..2 {
            assert!((s.scores[w] - expected[w] / attn.n_heads as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn indicator_masks_non_candidates() {
        assert_eq!(select(vec![0.2, 0.5, 0.3], &[0, 2]).head, Some(2));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(select(vec![0.4, 0.4], &[0, 1]).head, Some(0));
    }

    #[test]
    fn singleton_wins_regardless_of_score() {
        let p = select(vec![0.9, 0.0, 0.1], &[1]);
        assert_eq!(p.head, Some(1));
        assert_eq!(p.score, 0.0);
        assert_eq!(p.fallback, Fallback::None);
    }

    #[test]
    fn highest_tie_break() {
        let cfg = SelectorConfig {
            tie_break: TieBreak::Highest,
            ..Default::default()
        };
        assert_eq!(
            masked_argmax(&[0.4, 0.4], &BTreeSet::from([0, 1]), cfg.tie_break),
            Some(1)
        );
    }

    #[test]
    fn vote_prefers_majority_of_layers() {
        let s = AspectQueryScores {
            scores: vec![0.0, 0.5, 0.45],
            per_layer: vec![vec![0.0, 0.9, 0.1], vec![0.0, 0.3, 0.4], vec![0.0, 0.3, 0.85]],
            layers_used: vec![0, 1, 2],
            aggregation: AggregationMode::Vote,
        };
        let cfg = SelectorConfig {
            aggregation: AggregationMode::Vote,
            ..Default::default()
        };
        let ann = flat_annotation(3, CoarsePos::Adj);
        let p = select_opinion(
            &s,
            &single_word_candidates(&[1, 2]),
            SelectionContext {
                sentence: "w0 w1 w2",
                annotation: &ann,
                aspect_words: &BTreeSet::from([0]),
            },
            &cfg,
        );
        assert_eq!(p.head, Some(2));
        assert_eq!(p.score, 0.45);
    }

    #[test]
    fn aspect_head_is_excluded() {
        let ann = flat_annotation(3, CoarsePos::Noun);
        let p = select_opinion(
            &scores_of(vec![0.9, 0.05, 0.05]),
            &single_word_candidates(&[0, 2]),
            SelectionContext {
                sentence: "w0 w1 w2",
                annotation: &ann,
                aspect_words: &BTreeSet::from([0]),
            },
            &SelectorConfig::default(),
        );
        assert_eq!(p.head, Some(2));
        assert_eq!(p.text, "w2");
    }

    #[test]
    fn fallback_ladder() {
        let nouns = flat_annotation(2, CoarsePos::Noun);
        let ctx = SelectionContext {
            sentence: "w0 w1",
            annotation: &nouns,
            aspect_words: &BTreeSet::from([0]),
        };
        let p = select_opinion(
            &scores_of(vec![0.5, 0.5]),
            &CandidateSet::default(),
            ctx,
            &SelectorConfig::default(),
        );
        assert_eq!(p.fallback, Fallback::SentenceFallback);
        assert!(p.phrase.is_empty() && p.head.is_none());

        let adjs = flat_annotation(3, CoarsePos::Adj);
        let ctx = SelectionContext {
            sentence: "w0 w1 w2",
            annotation: &adjs,
            aspect_words: &BTreeSet::from([0]),
        };
        let p = select_opinion(
            &scores_of(vec![0.9, 0.2, 0.3]),
            &CandidateSet::default(),
            ctx,
            &SelectorConfig::default(),
        );
        assert_eq!((p.head, p.fallback), (Some(2), Fallback::PosFallback));
        let off = SelectorConfig {
            pos_fallback: false,
            ..Default::default()
        };
        let p = select_opinion(&scores_of(vec![0.9, 0.2, 0.3]), &CandidateSet::default(), ctx, &off);
        assert_eq!(p.fallback, Fallback::SentenceFallback);
    }

    /// Rigs the mock so that the aspect attends only to `target` in every
    /// head of the first four layers, solving for the attention that
    /// produces the wanted word scores.
    fn rig_towards(text: &str, aspect: usize, target: usize) -> MockEncoder {
        let base = MockEncoder::new(11).with_shape(12, 2, 8);
        let alignment = base.tokenize_with_alignment(text).unwrap();
        let n = alignment.n_subtokens;
        let aspect_rows: Vec<usize> = alignment.subtoken_spans[aspect].clone().collect();
        let target_col = alignment.subtoken_spans[target].start;
        let mut m = base;
        for layer in 0..4 {
            let heads = (0..2)
                .map(|_| {
                    Matrix::from_fn(n, |r, c| {
                        if aspect_rows.contains(&r) {
                            if c == target_col {
                                1.0
                            } else {
                                0.0
                            }
                        } else {
                            1.0 / n as f64
                        }
                    })
                })
                .collect();
            m = m.rig_attention(text, layer, heads);
        }
        m
    }

    #[test]
    fn rigged_mock_selects_great() {
        let text = "The fajitas are great";
        let enc = rig_towards(text, 1, 3);
        let s = sentence("s1", text, Split::Test);
        let inst = located("s1", text, "fajitas", &["great"], None);
        let out = extract_opinion(
            &s,
            &inst,
            &enc,
            &RuleAnnotator::new(),
            &PatternRegistry::default(),
            &SelectorConfig::default(),
        )
        .unwrap();
        assert_eq!(out.prediction.text, "great");
        assert_eq!(out.prediction.head, Some(3));
        // a UD-style parse makes "great" the predicate, not a modifier
        assert_eq!(out.prediction.fallback, Fallback::PosFallback);
        assert!((out.scores.scores[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rigged_mock_prefers_attended_candidate() {
        let text = "Great food with friendly staff";
        // candidates: Great (P1), with (P4), friendly (P1); aspect "staff"
        let enc = rig_towards(text, 4, 3);
        let s = sentence("s1", text, Split::Test);
        let inst = located("s1", text, "staff", &["friendly"], None);
        let out = extract_opinion(
            &s,
            &inst,
            &enc,
            &RuleAnnotator::new(),
            &PatternRegistry::default(),
            &SelectorConfig::default(),
        )
        .unwrap();
        assert_eq!(out.prediction.text, "friendly");
        assert_eq!(out.prediction.fallback, Fallback::None);
    }

    #[test]
    fn no_adjectives_means_sentence_fallback() {
        let text = "I ordered the fish";
        let enc = MockEncoder::new(2);
        let s = sentence("s1", text, Split::Test);
        let inst = located("s1", text, "fish", &[], None);
        let out = extract_opinion(
            &s,
            &inst,
            &enc,
            &RuleAnnotator::new(),
            &PatternRegistry::default(),
            &SelectorConfig::default(),
        )
        .unwrap();
        assert_eq!(out.prediction.fallback, Fallback::SentenceFallback);
    }

    proptest! {
        #[test]
        fn scaling_attention_scales_scores(seed in 0u64..500, lambda in 0.01f64..100.0) {
            let m = MockEncoder::new(seed).with_shape(4, 3, 6);
            let text = "the screen looks incredibly sharp";
            let alignment = m.tokenize_with_alignment(text).unwrap();
            let attn = m.attention_maps(text, &DEFAULT_LAYERS).unwrap();
            let scaled = AttentionView::unchecked(
                attn.layers.clone(),
                attn.n_heads,
                attn.d_k,
                attn.heads.iter().map(|l| l.iter().map(|h| h.scaled(lambda)).collect()).collect(),
            ).unwrap();
            let aspect = BTreeSet::from([1]);
            let a = aspect_scores(&attn, &alignment, &aspect).unwrap();
            let b = aspect_scores(&scaled, &alignment, &aspect).unwrap();
            for (x, y) in a.scores.iter().zip(&b.scores) {
                prop_assert!((x * lambda - y).abs() <= 1e-12 * lambda.max(1.0));
            }
            let all: BTreeSet<usize> = (0..a.scores.len()).filter(|w| !aspect.contains(w)).collect();
            prop_assert_eq!(masked_argmax(&a.scores, &all, TieBreak::Lowest), masked_argmax(&b.scores, &all, TieBreak::Lowest));
        }

        #[test]
        fn head_order_does_not_matter(seed in 0u64..500) {
            let m = MockEncoder::new(seed).with_shape(4, 4, 8);
            let text = "battery life is short";
            let alignment = m.tokenize_with_alignment(text).unwrap();
            let attn = m.attention_maps(text, &DEFAULT_LAYERS).unwrap();
            let mut permuted = attn.clone();
            for l in &mut permuted.heads {
                l.reverse();
                l.swap(0, 1);
            }
            let aspect = BTreeSet::from([0, 1]);
            let a = aspect_scores(&attn, &alignment, &aspect).unwrap();
            let b = aspect_scores(&permuted, &alignment, &aspect).unwrap();
            for (x, y) in a.scores.iter().zip(&b.scores) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn selected_head_is_in_mask(scores in prop::collection::vec(0.0f64..1.0, 1..12), bits in any::<u16>()) {
            let heads: Vec<usize> = (0..scores.len()).filter(|i| bits >> i & 1 == 1).collect();
            let p = select(scores.clone(), &heads);
            if heads.is_empty() {
                prop_assert_ne!(p.fallback, Fallback::None);
            } else {
                let h = p.head.unwrap();
                prop_assert!(heads.contains(&h));
                let max = heads.iter().map(|&i| scores[i]).fold(f64::MIN, f64::max);
                prop_assert_eq!(scores[h], max);
                prop_assert!(heads.iter().all(|&i| scores[i] < max || i >= h));
            }
        }
    }
}
