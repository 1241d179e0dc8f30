//! Encoder backends: tokenization with word alignment, attention maps,
//! contextual embeddings, and masked-token domain adaptation.
//!
//! Three backends ship with the crate:
//!
//! * `mock`: seeded pseudo-random attention and embeddings, no training.
//!   Every contract holds, so the whole pipeline can be tested without a
//!   trained model. Attention and vectors can be rigged per input text.
//! * `toy`: a small attention encoder with fixed projections and trainable
//!   subtoken embeddings. Supports adaptation and classifier fine-tuning.
//! * `external`: a subprocess speaking line-delimited JSON, for real
//!   pretrained encoders (see `scripts/hf_bridge.py`).

mod external;
mod mock;
pub(crate) mod rng;
mod subword;
mod toy;

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::corpus::{Polarity, TextCorpus};
use crate::error::{Error, Result};
use crate::text::{Span, Word};

pub use external::ExternalEncoder;
pub use mock::MockEncoder;
pub use subword::{split_word, SubwordTokenizer};
pub use toy::{ToyEncoder, ToyShape};

/// Row sums of attention matrices must be within this of 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

/// Word-to-subtoken alignment of one input text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAlignment {
    pub words: Vec<Word>,
    /// Half-open subtoken index range of each word.
    pub subtoken_spans: Vec<Range<usize>>,
    pub special_token_indices: BTreeSet<usize>,
    pub n_subtokens: usize,
}

impl TokenAlignment {
    /// Checks that word ranges and special positions partition
    /// `0..n_subtokens` and that every word has at least one subtoken.
    pub fn validate(&self) -> Result<()> {
        if self.words.len() != self.subtoken_spans.len() {
            return Err(Error::Consistency(format!(
                "{} words but {} subtoken spans",
                self.words.len(),
                self.subtoken_spans.len()
            )));
        }
        let mut owner = vec![false; self.n_subtokens];
        let mut claim = |i: usize| -> Result<()> {
            match owner.get_mut(i) {
                Some(slot) if !*slot => {
                    *slot = true;
                    Ok(())
                }
                Some(_) => Err(Error::Consistency(format!("subtoken {i} claimed twice"))),
                None => Err(Error::Consistency(format!("subtoken {i} out of range"))),
            }
        };
        let mut prev_end = 0;
        for (w, r) in self.subtoken_spans.iter().enumerate() {
            if r.is_empty() {
                return Err(Error::Consistency(format!("word {w} has no subtokens")));
            }
            if r.start < prev_end {
                return Err(Error::Consistency(format!("word {w} subtokens out of order")));
            }
            prev_end = r.end;
            for i in r.clone() {
                claim(i)?;
            }
        }
        for &i in &self.special_token_indices {
            claim(i)?;
        }
        if let Some(gap) = owner.iter().position(|o| !o) {
            return Err(Error::Consistency(format!("subtoken {gap} belongs to no word")));
        }
        Ok(())
    }

    pub fn word_indices_for_span(&self, span: Span) -> BTreeSet<usize> {
        crate::text::words_in_span(&self.words, span)
    }

    pub fn n_words(&self) -> usize {
        self.words.len()
    }
}

/// Dense square matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Consistency("attention matrix is not square".into()));
        }
        Ok(Matrix {
            n,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                data.push(f(r, c));
            }
        }
        Matrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n..(row + 1) * self.n]
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix {
            n: self.n,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Attention probabilities for a set of layers: `heads[l][h]` is the
/// query-by-key matrix of head `h` in layer `layers[l]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionView {
    pub layers: Vec<usize>,
    pub n_heads: usize,
    pub d_k: usize,
    pub heads: Vec<Vec<Matrix>>,
}

impl AttentionView {
    /// Validates shapes and row-stochasticity.
    pub fn new(layers: Vec<usize>, n_heads: usize, d_k: usize, heads: Vec<Vec<Matrix>>) -> Result<Self> {
        let view = AttentionView::unchecked(layers, n_heads, d_k, heads)?;
        view.check_row_stochastic()?;
        Ok(view)
    }

    /// Shape checks only. Used for deliberately rescaled views.
    pub fn unchecked(layers: Vec<usize>, n_heads: usize, d_k: usize, heads: Vec<Vec<Matrix>>) -> Result<Self> {
        if layers.len() != heads.len() {
            return Err(Error::Consistency(format!(
                "{} layers listed but {} supplied",
                layers.len(),
                heads.len()
            )));
        }
        let n = heads.first().and_then(|l| l.first()).map(Matrix::dim).unwrap_or(0);
        for (li, layer) in heads.iter().enumerate() {
            if layer.len() != n_heads {
                return Err(Error::Consistency(format!(
                    "layer {} has {} heads, expected {n_heads}",
                    layers[li],
                    layer.len()
                )));
            }
            if layer.iter().any(|m| m.dim() != n) {
                return Err(Error::Consistency("attention matrices differ in size".into()));
            }
        }
        Ok(AttentionView {
            layers,
            n_heads,
            d_k,
            heads,
        })
    }

    pub fn check_row_stochastic(&self) -> Result<()> {
        for (li, layer) in self.heads.iter().enumerate() {
            for (h, m) in layer.iter().enumerate() {
                for r in 0..m.dim() {
                    let row = m.row(r);
                    let sum: f64 = row.iter().sum();
                    if !sum.is_finite() || row.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() >= ROW_SUM_TOLERANCE {
                        return Err(Error::NotRowStochastic {
                            layer: self.layers[li],
                            head: h,
                            row: r,
                            sum,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_subtokens(&self) -> usize {
        self.heads.first().and_then(|l| l.first()).map(Matrix::dim).unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    MeanSubtokens,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub layer: usize,
    pub pooling: Pooling,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Final-layer subtoken vectors of one input.
#[derive(Clone, Debug)]
pub struct HiddenStates {
    pub alignment: TokenAlignment,
    pub layer: usize,
    pub vectors: Vec<Vec<f64>>,
}

impl HiddenStates {
    /// Mean over words of each word's mean subtoken vector.
    pub fn pool_words(&self, word_indices: &BTreeSet<usize>) -> Result<EmbeddingVector> {
        if word_indices.is_empty() {
            return Err(Error::Argument("empty word index set".into()));
        }
        let dim = self.vectors.first().map(Vec::len).unwrap_or(0);
        let mut acc = vec![0.0; dim];
        for &w in word_indices {
            let Some(range) = self.alignment.subtoken_spans.get(w) else {
                return Err(Error::Argument(format!(
                    "word index {w} out of range for {} words",
                    self.alignment.n_words()
                )));
            };
            let k = range.len() as f64;
            for i in range.clone() {
                for (a, v) in acc.iter_mut().zip(&self.vectors[i]) {
                    *a += v / k;
                }
            }
        }
        let n = word_indices.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(EmbeddingVector {
            values: acc,
            layer: self.layer,
            pooling: Pooling::MeanSubtokens,
        })
    }

    /// Mean over every non-special subtoken, as used for label words.
    pub fn pool_all_words(&self) -> Result<EmbeddingVector> {
        let all: BTreeSet<usize> = (0..self.alignment.n_words()).collect();
        self.pool_words(&all)
    }
}

/// Masked-token adaptation hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptationConfig {
    pub batch_size: usize,
    pub grad_accum_steps: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub mask_probability: f64,
    pub seed: u64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        AdaptationConfig {
            batch_size: 16,
            grad_accum_steps: 2,
            learning_rate: 5e-5,
            epochs: 5,
            mask_probability: 0.15,
            seed: 0,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.grad_accum_steps == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "batch size, accumulation steps and epochs must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.mask_probability > 0.0 && self.mask_probability < 1.0) {
            return Err(Error::Config("mask probability must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Handle to an adapted model state and where it was persisted.
#[derive(Clone)]
pub struct AdaptedModel {
    pub encoder: Arc<dyn Encoder>,
    pub run_id: String,
    pub run_dir: PathBuf,
    /// Masked-token loss before training, then after every epoch.
    pub losses: Vec<f64>,
    /// True when the state was loaded from an earlier identical run.
    pub reused: bool,
}

impl fmt::Debug for AdaptedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdaptedModel")
            .field("encoder", &self.encoder.name())
            .field("run_id", &self.run_id)
            .field("run_dir", &self.run_dir)
            .field("losses", &self.losses)
            .finish()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            epochs: 5,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

/// Three-way polarity classifier over encoded text.
pub trait SequenceClassifier: Send + Sync {
    fn predict(&self, text: &str) -> Result<Polarity>;
}

/// The encoder contract every backend implements.
///
/// Handles are immutable once built; adaptation always produces a new
/// handle.
pub trait Encoder: Send + Sync {
    /// Backend id (`mock`, `toy`, `external`).
    fn name(&self) -> &str;
    /// Identifies the model state; equal fingerprints mean equal outputs.
    fn fingerprint(&self) -> String;
    fn num_layers(&self) -> usize;
    fn num_heads(&self) -> usize;
    fn hidden_size(&self) -> usize;

    fn tokenize_with_alignment(&self, text: &str) -> Result<TokenAlignment>;
    fn attention_maps(&self, text: &str, layers: &[usize]) -> Result<AttentionView>;
    fn final_hidden(&self, text: &str) -> Result<HiddenStates>;
    /// Embedding of the bare label word; cached per model state.
    fn embed_label(&self, label: Polarity) -> Result<EmbeddingVector>;

    /// Mean over the listed words of their mean final-layer subtoken vector.
    fn embed_span(&self, text: &str, word_indices: &BTreeSet<usize>) -> Result<EmbeddingVector> {
        if word_indices.is_empty() {
            return Err(Error::Argument("empty word index set".into()));
        }
        self.final_hidden(text)?.pool_words(word_indices)
    }

    fn domain_adapt(&self, _corpus: &TextCorpus, _config: &AdaptationConfig, _run_root: &Path) -> Result<AdaptedModel> {
        Err(Error::Capability {
            backend: self.name().to_string(),
            capability: "masked-token domain adaptation",
        })
    }

    /// Trains a polarity classifier on `(text, label)` pairs.
    fn finetune_classifier(
        &self,
        _examples: &[(String, Polarity)],
        _config: &FinetuneConfig,
    ) -> Result<Box<dyn SequenceClassifier>> {
        Err(Error::Capability {
            backend: self.name().to_string(),
            capability: "classification fine-tuning",
        })
    }
}

pub(crate) fn check_layers(layers: &[usize], depth: usize) -> Result<()> {
    match layers.iter().find(|&&l| l >= depth) {
        Some(&layer) => Err(Error::LayerOutOfRange { layer, depth }),
        None => Ok(()),
    }
}

/// Per-model-state cache of the three label embeddings.
#[derive(Default)]
pub(crate) struct LabelCache {
    slots: [OnceLock<EmbeddingVector>; 3],
}

impl LabelCache {
    pub fn get_or_try(
        &self,
        label: Polarity,
        compute: impl FnOnce() -> Result<EmbeddingVector>,
    ) -> Result<EmbeddingVector> {
        let slot = &self.slots[label.index()];
        if let Some(v) = slot.get() {
            return Ok(v.clone());
        }
        let v = compute()?;
        Ok(slot.get_or_init(|| v).clone())
    }

    pub fn set(&self, label: Polarity, v: EmbeddingVector) {
        let _ = self.slots[label.index()].set(v);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Toy,
    External,
}

impl BackendKind {
    pub const ALL: [BackendKind; 3] = [BackendKind::Mock, BackendKind::Toy, BackendKind::External];

    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Mock => "mock",
            BackendKind::Toy => "toy",
            BackendKind::External => "external",
        }
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BackendKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown backend `{s}`")))
    }
}

/// What is needed to open a backend by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub kind: BackendKind,
    /// Toy weights directory, or the command line of an external bridge.
    pub model: Option<String>,
    pub seed: u64,
    pub max_subtokens: usize,
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec {
            kind: BackendKind::Mock,
            model: None,
            seed: 42,
            max_subtokens: 512,
        }
    }
}

pub fn open_backend(spec: &BackendSpec) -> Result<Arc<dyn Encoder>> {
    Ok(match spec.kind {
        BackendKind::Mock => Arc::new(MockEncoder::new(spec.seed).with_max_subtokens(spec.max_subtokens)),
        BackendKind::Toy => match &spec.model {
            Some(dir) => Arc::new(ToyEncoder::load(Path::new(dir))?),
            None => Arc::new(ToyEncoder::new(ToyShape::default(), spec.seed).with_max_subtokens(spec.max_subtokens)),
        },
        BackendKind::External => {
            let cmd = spec
                .model
                .as_deref()
                .ok_or_else(|| Error::Config("external backend needs `backend.model` (bridge command)".into()))?;
            Arc::new(ExternalEncoder::spawn(cmd)?)
        }
    })
}
