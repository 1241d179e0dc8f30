use std::collections::{BTreeMap, HashMap};

use super::rng::{stream, symmetric, text_key, unit_open};
use super::subword::SubwordTokenizer;
use super::{check_layers, AttentionView, EmbeddingVector, Encoder, HiddenStates, LabelCache, Matrix, TokenAlignment};
use crate::corpus::Polarity;
use crate::error::{Error, Result};

const ATTENTION_STREAM: u64 = 0xA77E;
const HIDDEN_STREAM: u64 = 0x41DD;

/// Deterministic stand-in encoder.
///
/// Attention rows are uniform draws normalized to sum to one; hidden vectors
/// are unit-norm draws. Both are keyed by `(seed, text, layer, head or
/// position)`, so outputs never depend on call order or platform.
pub struct MockEncoder {
    seed: u64,
    n_layers: usize,
    n_heads: usize,
    hidden: usize,
    tokenizer: SubwordTokenizer,
    attention_rigs: HashMap<String, BTreeMap<usize, Vec<Matrix>>>,
    vector_rigs: HashMap<String, BTreeMap<usize, Vec<f64>>>,
    labels: LabelCache,
}

impl MockEncoder {
    pub fn new(seed: u64) -> Self {
        MockEncoder {
            seed,
            n_layers: 12,
            n_heads: 4,
            hidden: 32,
            tokenizer: SubwordTokenizer { max_subtokens: 512 },
            attention_rigs: HashMap::new(),
            vector_rigs: HashMap::new(),
            labels: LabelCache::default(),
        }
    }

    pub fn with_shape(mut self, n_layers: usize, n_heads: usize, hidden: usize) -> Self {
        assert!(n_layers > 0 && n_heads > 0 && hidden > 0);
        self.n_layers = n_layers;
        self.n_heads = n_heads;
        self.hidden = hidden;
        self
    }

    pub fn with_max_subtokens(mut self, limit: usize) -> Self {
        self.tokenizer.max_subtokens = limit;
        self
    }

    /// Replaces the attention of `layer` for one input text. The matrices are
    /// returned as given, so a corrupted rig surfaces as a validation error.
    pub fn rig_attention(mut self, text: &str, layer: usize, heads: Vec<Matrix>) -> Self {
        self.attention_rigs
            .entry(text.to_string())
            .or_default()
            .insert(layer, heads);
        self
    }

    /// Replaces the final-layer vector of every subtoken of `word` in `text`.
    pub fn rig_word_vector(mut self, text: &str, word: usize, vector: Vec<f64>) -> Self {
        assert_eq!(vector.len(), self.hidden, "rigged vector has wrong dimension");
        self.vector_rigs
            .entry(text.to_string())
            .or_default()
            .insert(word, vector);
        self
    }

    pub fn rig_label(self, label: Polarity, vector: Vec<f64>) -> Self {
        assert_eq!(vector.len(), self.hidden, "rigged vector has wrong dimension");
        self.labels.set(
            label,
            EmbeddingVector {
                values: vector,
                layer: self.n_layers - 1,
                pooling: super::Pooling::MeanSubtokens,
            },
        );
        self
    }

    fn random_matrix(&self, key: u64, layer: usize, head: usize, n: usize) -> Matrix {
        let mut rng = stream(self.seed, &[ATTENTION_STREAM, key, layer as u64, head as u64]);
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..n).map(|_| unit_open(&mut rng)).collect();
            let sum: f64 = row.iter().sum();
            rows.push(row.into_iter().map(|v| v / sum).collect());
        }
        Matrix::from_rows(rows).expect("square by construction")
    }

    fn random_unit_vector(&self, key: u64, position: usize) -> Vec<f64> {
        let mut rng = stream(self.seed, &[HIDDEN_STREAM, key, position as u64]);
        let v: Vec<f64> = (0..self.hidden).map(|_| symmetric(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        v.into_iter().map(|x| x / norm).collect()
    }
}

impl Encoder for MockEncoder {
    fn name(&self) -> &str {
        "mock"
    }

    fn fingerprint(&self) -> String {
        let mut rigged: Vec<&String> = self.attention_rigs.keys().chain(self.vector_rigs.keys()).collect();
        rigged.sort();
        rigged.dedup();
        format!(
            "mock:{}:{}x{}x{}:rigs={:016x}",
            self.seed,
            self.n_layers,
            self.n_heads,
            self.hidden,
            text_key(&rigged.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("\u{1f}"))
        )
    }

    fn num_layers(&self) -> usize {
        self.n_layers
    }

    fn num_heads(&self) -> usize {
        self.n_heads
    }

    fn hidden_size(&self) -> usize {
        self.hidden
    }

    fn tokenize_with_alignment(&self, text: &str) -> Result<TokenAlignment> {
        Ok(self.tokenizer.tokenize(text)?.0)
    }

    fn attention_maps(&self, text: &str, layers: &[usize]) -> Result<AttentionView> {
        check_layers(layers, self.n_layers)?;
        let (alignment, _) = self.tokenizer.tokenize(text)?;
        let n = alignment.n_subtokens;
        let key = text_key(text);
        let rigs = self.attention_rigs.get(text);
        let mut heads = Vec::with_capacity(layers.len());
        for &layer in layers {
            match rigs.and_then(|r| r.get(&layer)) {
                Some(rigged) => {
                    if rigged.len() != self.n_heads || rigged.iter().any(|m| m.dim() != n) {
                        return Err(Error::Consistency(format!(
                            "rigged attention for layer {layer} does not match the input shape"
                        )));
                    }
                    heads.push(rigged.clone());
                }
                None => heads.push(
                    (0..self.n_heads)
                        .map(|h| self.random_matrix(key, layer, h, n))
                        .collect(),
                ),
            }
        }
        AttentionView::new(layers.to_vec(), self.n_heads, self.hidden / self.n_heads, heads)
    }

    fn final_hidden(&self, text: &str) -> Result<HiddenStates> {
        let (alignment, _) = self.tokenizer.tokenize(text)?;
        let key = text_key(text);
        let mut vectors: Vec<Vec<f64>> = (0..alignment.n_subtokens)
            .map(|p| self.random_unit_vector(key, p))
            .collect();
        if let Some(rigs) = self.vector_rigs.get(text) {
            for (&word, v) in rigs {
                let range = alignment
                    .subtoken_spans
                    .get(word)
                    .ok_or_else(|| Error::Consistency(format!("rigged word {word} not in `{text}`")))?;
                for i in range.clone() {
                    vectors[i] = v.clone();
                }
            }
        }
        Ok(HiddenStates {
            alignment,
            layer: self.n_layers - 1,
            vectors,
        })
    }

    fn embed_label(&self, label: Polarity) -> Result<EmbeddingVector> {
        self.labels
            .get_or_try(label, || self.final_hidden(label.as_str())?.pool_all_words())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn first_four_layers_of_twelve() {
        let m = MockEncoder::new(1);
        let view = m.attention_maps("the fajitas are great", &[0, 1, 2, 3]).unwrap();
        assert_eq!(view.heads.len(), 4);
        assert!(view.heads.iter().all(|l| l.len() == m.num_heads()));
        assert_eq!(view.n_subtokens(), 2 + 5);
    }

    #[test]
    fn rows_sum_to_one_and_repeat_bitwise() {
        let m = MockEncoder::new(9);
        let a = m
            .attention_maps("a rather long sentence about batteries", &[0, 5, 11])
            .unwrap();
        for layer in &a.heads {
            for mat in layer {
                for r in 0..mat.dim() {
                    assert!((mat.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-4);
                }
            }
        }
        let b = m
            .attention_maps("a rather long sentence about batteries", &[0, 5, 11])
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn layer_out_of_range() {
        let m = MockEncoder::new(1);
        assert!(matches!(
            m.attention_maps("x", &[12]),
            Err(Error::LayerOutOfRange { layer: 12, depth: 12 })
        ));
    }

    #[test]
    fn seed_changes_outputs() {
        let a = MockEncoder::new(1).attention_maps("x y", &[0]).unwrap();
        let b = MockEncoder::new(2).attention_maps("x y", &[0]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn span_embedding_contracts() {
        let m = MockEncoder::new(3);
        let text = "great battery";
        let states = m.final_hidden(text).unwrap();
        let single = m.embed_span(text, &BTreeSet::from([0])).unwrap();
        assert_eq!(single.values, states.vectors[1]);
        assert!((single.norm() - 1.0).abs() < 1e-12);
        let battery = m.embed_span(text, &BTreeSet::from([1])).unwrap();
        let both = m.embed_span(text, &BTreeSet::from([0, 1])).unwrap();
        for i in 0..both.dim() {
            assert!((both.values[i] - (single.values[i] + battery.values[i]) / 2.0).abs() < 1e-15);
        }
        assert_eq!(both, m.embed_span(text, &BTreeSet::from([0, 1])).unwrap());
        assert!(m.embed_span(text, &BTreeSet::new()).is_err());
    }

    #[test]
    fn label_vectors_distinct_and_cached() {
        let m = MockEncoder::new(5);
        let p = m.embed_label(Polarity::Positive).unwrap();
        let n = m.embed_label(Polarity::Negative).unwrap();
        let u = m.embed_label(Polarity::Neutral).unwrap();
        assert!(cosine(&p.values, &n.values) < 1.0);
        assert!([&p, &n, &u].iter().all(|v| v.dim() == m.hidden_size()));
        assert_eq!(p, m.embed_label(Polarity::Positive).unwrap());
    }

    #[test]
    fn corrupted_rig_is_rejected() {
        let text = "good";
        let mut rows = vec![vec![1.0 / 3.0; 3]; 3];
        rows[1] = vec![0.5, 0.3, 0.3];
        let bad = Matrix::from_rows(rows).unwrap();
        let m = MockEncoder::new(1)
            .with_shape(4, 1, 8)
            .rig_attention(text, 2, vec![bad]);
        assert!(m.attention_maps(text, &[0, 1]).is_ok());
        assert!(matches!(
            m.attention_maps(text, &[0, 1, 2, 3]),
            Err(Error::NotRowStochastic {
                layer: 2,
                head: 0,
                row: 1,
                ..
            })
        ));
    }

    #[test]
    fn no_training_capability() {
        let m = MockEncoder::new(1);
        let corpus = crate::corpus::TextCorpus {
            documents: vec!["x".into()],
            provenance: vec![],
        };
        let err = m
            .domain_adapt(&corpus, &Default::default(), std::path::Path::new("/nonexistent"))
            .unwrap_err();
        assert!(err.is_capability());
    }
}
