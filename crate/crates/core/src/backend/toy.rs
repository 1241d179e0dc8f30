//! A small trainable encoder.
//!
//! Subtokens are hashed into a fixed vocabulary of learned embeddings; a
//! stack of attention layers with fixed seeded projections turns them into
//! contextual vectors. Adaptation trains the embedding table with a
//! masked-token objective: the masked subtoken is predicted from the mean
//! embedding of its unmasked neighbours through the tied embedding matrix.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::rng::{stream, symmetric, text_key};
use super::subword::{SubwordTokenizer, CLS, SEP};
use super::{
    check_layers, AdaptationConfig, AdaptedModel, AttentionView, EmbeddingVector, Encoder, FinetuneConfig,
    HiddenStates, LabelCache, Matrix, SequenceClassifier, TokenAlignment,
};
use crate::corpus::{Polarity, TextCorpus};
use crate::error::{Error, Result};

const PROJECTION_STREAM: u64 = 0x9E0;
const EMBEDDING_STREAM: u64 = 0xE3B;
const RESERVED: u64 = 3;
const CLS_ID: usize = 0;
const SEP_ID: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyShape {
    pub vocab: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
}

impl Default for ToyShape {
    fn default() -> Self {
        ToyShape {
            vocab: 2048,
            hidden: 32,
            layers: 6,
            heads: 4,
        }
    }
}

impl ToyShape {
    fn d_k(&self) -> usize {
        self.hidden / self.heads
    }
}

/// `hidden x d_k` projections of one head.
struct HeadProjection {
    query: Vec<f64>,
    key: Vec<f64>,
    value: Vec<f64>,
}

struct Weights {
    shape: ToyShape,
    seed: u64,
    embeddings: Vec<f64>,
    projections: Vec<Vec<HeadProjection>>,
    fingerprint: String,
}

pub struct ToyEncoder {
    weights: Arc<Weights>,
    tokenizer: SubwordTokenizer,
    labels: LabelCache,
}

#[derive(Serialize, Deserialize, PartialEq)]
struct PersistedConfig {
    shape: ToyShape,
    seed: u64,
    max_subtokens: usize,
    base_fingerprint: String,
    corpus_sha256: String,
    adaptation: AdaptationConfig,
}

impl ToyEncoder {
    pub fn new(shape: ToyShape, seed: u64) -> Self {
        assert!(shape.vocab > RESERVED as usize && shape.heads > 0 && shape.hidden.is_multiple_of(shape.heads));
        let mut rng = stream(seed, &[EMBEDDING_STREAM]);
        let embeddings = (0..shape.vocab * shape.hidden)
            .map(|_| 0.1 * symmetric(&mut rng))
            .collect();
        ToyEncoder::from_embeddings(shape, seed, embeddings, 512)
    }

    fn from_embeddings(shape: ToyShape, seed: u64, embeddings: Vec<f64>, max_subtokens: usize) -> Self {
        let d_k = shape.d_k();
        let scale = (3.0 / shape.hidden as f64).sqrt();
        let projections = (0..shape.layers)
            .map(|l| {
                (0..shape.heads)
                    .map(|h| {
                        let mut rng = stream(seed, &[PROJECTION_STREAM, l as u64, h as u64]);
                        let mut draw =
                            || -> Vec<f64> { (0..shape.hidden * d_k).map(|_| scale * symmetric(&mut rng)).collect() };
                        HeadProjection {
                            query: draw(),
                            key: draw(),
                            value: draw(),
                        }
                    })
                    .collect()
            })
            .collect();
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&shape).expect("shape serializes"));
        hasher.update(seed.to_le_bytes());
        for v in &embeddings {
            hasher.update(v.to_le_bytes());
        }
        let fingerprint = format!("toy:{}", hex::encode(&hasher.finalize()[..12]));
        ToyEncoder {
            weights: Arc::new(Weights {
                shape,
                seed,
                embeddings,
                projections,
                fingerprint,
            }),
            tokenizer: SubwordTokenizer { max_subtokens },
            labels: LabelCache::default(),
        }
    }

    pub fn with_max_subtokens(self, limit: usize) -> Self {
        ToyEncoder {
            tokenizer: SubwordTokenizer { max_subtokens: limit },
            ..self
        }
    }

    pub fn shape(&self) -> ToyShape {
        self.weights.shape
    }

    /// Opens an adapted state written by [`Encoder::domain_adapt`].
    pub fn load(dir: &Path) -> Result<Self> {
        let config_path = dir.join("config");
        let config: PersistedConfig = serde_json::from_str(
            &fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?,
        )
        .map_err(|e| Error::Format {
            path: config_path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let weights_path = dir.join("weights");
        let bytes = fs::read(&weights_path).map_err(|e| Error::io(&weights_path, e))?;
        let expected = config.shape.vocab * config.shape.hidden * 8;
        if bytes.len() != expected {
            return Err(Error::Format {
                path: weights_path,
                line: 0,
                message: format!("expected {expected} bytes, found {}", bytes.len()),
            });
        }
        let embeddings = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(ToyEncoder::from_embeddings(
            config.shape,
            config.seed,
            embeddings,
            config.max_subtokens,
        ))
    }

    fn piece_id(&self, piece: &str) -> usize {
        match piece {
            CLS => CLS_ID,
            SEP => SEP_ID,
            _ => (RESERVED + text_key(piece) % (self.weights.shape.vocab as u64 - RESERVED)) as usize,
        }
    }

    fn ids(&self, pieces: &[String]) -> Vec<usize> {
        pieces.iter().map(|p| self.piece_id(p)).collect()
    }

    fn row(&self, id: usize) -> &[f64] {
        let h = self.weights.shape.hidden;
        &self.weights.embeddings[id * h..(id + 1) * h]
    }

    /// Runs the stack, returning final hidden vectors and the attention of
    /// the requested layers.
    fn forward(&self, ids: &[usize], want: &[usize]) -> (Vec<Vec<f64>>, Vec<Vec<Matrix>>) {
        let shape = self.weights.shape;
        let (n, hidden, d_k) = (ids.len(), shape.hidden, shape.d_k());
        let mut states: Vec<Vec<f64>> = ids
            .iter()
            .enumerate()
            .map(|(p, &id)| {
                self.row(id)
                    .iter()
                    .enumerate()
                    .map(|(j, e)| e + 0.1 * positional(p, j, hidden))
                    .collect()
            })
            .collect();
        let mut attention = Vec::new();
        let scale = 1.0 / (d_k as f64).sqrt();
        for (layer, heads) in self.weights.projections.iter().enumerate() {
            let mut mixed = vec![vec![0.0; hidden]; n];
            let mut layer_maps = Vec::new();
            for (h, proj) in heads.iter().enumerate() {
                let q = project(&states, &proj.query, d_k);
                let k = project(&states, &proj.key, d_k);
                let v = project(&states, &proj.value, d_k);
                let probs = Matrix::from_fn(n, |r, c| dot(&q[r], &k[c]) * scale);
                let probs = softmax_rows(&probs);
                for (r, out) in mixed.iter_mut().enumerate() {
                    for (c, vc) in v.iter().enumerate() {
                        let a = probs.get(r, c);
                        for j in 0..d_k {
                            out[h * d_k + j] += a * vc[j];
                        }
                    }
                }
                if want.contains(&layer) {
                    layer_maps.push(probs);
                }
            }
            if want.contains(&layer) {
                attention.push((layer, layer_maps));
            }
            for (s, m) in states.iter_mut().zip(&mixed) {
                for (x, y) in s.iter_mut().zip(m) {
                    *x += y;
                }
                layer_norm(s);
            }
        }
        let ordered = want
            .iter()
            .map(|l| {
                attention
                    .iter()
                    .find(|(layer, _)| layer == l)
                    .map(|(_, maps)| maps.clone())
                    .expect("requested layers were checked")
            })
            .collect();
        (states, ordered)
    }

    fn adapt_embeddings(&self, docs: &[Vec<usize>], config: &AdaptationConfig) -> (Vec<f64>, Vec<f64>) {
        let shape = self.weights.shape;
        let mut emb = self.weights.embeddings.clone();
        let eval_masks = draw_masks(docs, config.mask_probability, config.seed ^ 0x5EED_E7A1);
        let mut losses = vec![mlm_loss(&emb, shape, docs, &eval_masks, None)];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let step_docs = config.batch_size * config.grad_accum_steps;
        let mut grad = vec![0.0; emb.len()];
        for epoch in 0..config.epochs {
            let mut order: Vec<usize> = (0..docs.len()).collect();
            order.shuffle(&mut rng);
            let masks = draw_masks(docs, config.mask_probability, rng.random());
            for chunk in order.chunks(step_docs) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let picked: Vec<Vec<usize>> = chunk.iter().map(|&d| docs[d].clone()).collect();
                let picked_masks: Vec<Vec<usize>> = chunk.iter().map(|&d| masks[d].clone()).collect();
                mlm_loss(&emb, shape, &picked, &picked_masks, Some(&mut grad));
                for (e, g) in emb.iter_mut().zip(&grad) {
                    *e -= config.learning_rate * g;
                }
            }
            let loss = mlm_loss(&emb, shape, docs, &eval_masks, None);
            log::info!("adaptation epoch {}: masked-token loss {loss:.6}", epoch + 1);
            losses.push(loss);
        }
        (emb, losses)
    }
}

fn positional(p: usize, j: usize, hidden: usize) -> f64 {
    let rate = 1.0 / 10000f64.powf((2 * (j / 2)) as f64 / hidden as f64);
    if j.is_multiple_of(2) {
        (p as f64 * rate).sin()
    } else {
        (p as f64 * rate).cos()
    }
}

fn project(states: &[Vec<f64>], weights: &[f64], d_k: usize) -> Vec<Vec<f64>> {
    states
        .iter()
        .map(|s| {
            (0..d_k)
                .map(|j| s.iter().enumerate().map(|(i, x)| x * weights[i * d_k + j]).sum())
                .collect()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax_rows(scores: &Matrix) -> Matrix {
    let n = scores.dim();
    let mut rows = Vec::with_capacity(n);
    for r in 0..n {
        let row = scores.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        rows.push(exps.into_iter().map(|e| e / sum).collect());
    }
    Matrix::from_rows(rows).expect("square")
}

fn layer_norm(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let inv = 1.0 / (var + 1e-5).sqrt();
    v.iter_mut().for_each(|x| *x = (*x - mean) * inv);
}

/// Masked positions per document; at least one whenever the document has
/// two or more subtokens.
fn draw_masks(docs: &[Vec<usize>], p: f64, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    docs.iter()
        .map(|doc| {
            if doc.len() < 2 {
                return Vec::new();
            }
            let mut masked: Vec<usize> = (0..doc.len()).filter(|_| rng.random::<f64>() < p).collect();
            if masked.is_empty() {
                masked.push(rng.random_range(0..doc.len()));
            }
            if masked.len() == doc.len() {
                masked.pop();
            }
            masked
        })
        .collect()
}

/// Mean masked-token cross-entropy; accumulates the mean gradient into
/// `grad` when given.
fn mlm_loss(
    emb: &[f64],
    shape: ToyShape,
    docs: &[Vec<usize>],
    masks: &[Vec<usize>],
    mut grad: Option<&mut Vec<f64>>,
) -> f64 {
    let h = shape.hidden;
    let examples: usize = masks.iter().map(Vec::len).sum();
    if examples == 0 {
        return 0.0;
    }
    let inv_examples = 1.0 / examples as f64;
    let mut total = 0.0;
    let mut logits = vec![0.0; shape.vocab];
    for (doc, masked) in docs.iter().zip(masks) {
        let context: Vec<usize> = (0..doc.len()).filter(|i| !masked.contains(i)).collect();
        let mut ctx = vec![0.0; h];
        for &i in &context {
            for (c, e) in ctx.iter_mut().zip(&emb[doc[i] * h..(doc[i] + 1) * h]) {
                *c += e / context.len() as f64;
            }
        }
        for &m in masked {
            let target = doc[m];
            for (v, l) in logits.iter_mut().enumerate() {
                *l = dot(&emb[v * h..(v + 1) * h], &ctx);
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            total += max + sum.ln() - logits[target];
            let Some(grad) = grad.as_deref_mut() else { continue };
            let mut dctx = vec![0.0; h];
            for v in 0..shape.vocab {
                let mut d = (logits[v] - max).exp() / sum;
                if v == target {
                    d -= 1.0;
                }
                d *= inv_examples;
                let row = &emb[v * h..(v + 1) * h];
                for j in 0..h {
                    grad[v * h + j] += d * ctx[j];
                    dctx[j] += d * row[j];
                }
            }
            for &i in &context {
                for j in 0..h {
                    grad[doc[i] * h + j] += dctx[j] / context.len() as f64;
                }
            }
        }
    }
    total * inv_examples
}

fn corpus_digest(corpus: &TextCorpus) -> String {
    let mut hasher = Sha256::new();
    for d in &corpus.documents {
        hasher.update((d.len() as u64).to_le_bytes());
        hasher.update(d.as_bytes());
    }
    hex::encode(hasher.finalize())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_losses(path: &Path) -> Result<Vec<f64>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split('\t')
                .nth(1)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::Format {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected `epoch<TAB>loss`".into(),
                })
        })
        .collect()
}

impl Encoder for ToyEncoder {
    fn name(&self) -> &str {
        "toy"
    }

    fn fingerprint(&self) -> String {
        self.weights.fingerprint.clone()
    }

    fn num_layers(&self) -> usize {
        self.weights.shape.layers
    }

    fn num_heads(&self) -> usize {
        self.weights.shape.heads
    }

    fn hidden_size(&self) -> usize {
        self.weights.shape.hidden
    }

    fn tokenize_with_alignment(&self, text: &str) -> Result<TokenAlignment> {
        Ok(self.tokenizer.tokenize(text)?.0)
    }

    fn attention_maps(&self, text: &str, layers: &[usize]) -> Result<AttentionView> {
        check_layers(layers, self.num_layers())?;
        let (_, pieces) = self.tokenizer.tokenize(text)?;
        let (_, maps) = self.forward(&self.ids(&pieces), layers);
        AttentionView::new(layers.to_vec(), self.num_heads(), self.weights.shape.d_k(), maps)
    }

    fn final_hidden(&self, text: &str) -> Result<HiddenStates> {
        let (alignment, pieces) = self.tokenizer.tokenize(text)?;
        let (vectors, _) = self.forward(&self.ids(&pieces), &[]);
        Ok(HiddenStates {
            alignment,
            layer: self.num_layers() - 1,
            vectors,
        })
    }

    fn embed_label(&self, label: Polarity) -> Result<EmbeddingVector> {
        self.labels
            .get_or_try(label, || self.final_hidden(label.as_str())?.pool_all_words())
    }

    fn domain_adapt(&self, corpus: &TextCorpus, config: &AdaptationConfig, run_root: &Path) -> Result<AdaptedModel> {
        config.validate()?;
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let persisted = PersistedConfig {
            shape: self.weights.shape,
            seed: self.weights.seed,
            max_subtokens: self.tokenizer.max_subtokens,
            base_fingerprint: self.fingerprint(),
            corpus_sha256: corpus_digest(corpus),
            adaptation: config.clone(),
        };
        let config_json = serde_json::to_string_pretty(&persisted).expect("config serializes");
        let run_id = hex::encode(&Sha256::digest(config_json.as_bytes())[..8]);
        let run_dir: PathBuf = run_root.join(&run_id);

        if run_dir.join("weights").is_file() && run_dir.join("loss-log").is_file() {
            let existing: Option<PersistedConfig> = fs::read_to_string(run_dir.join("config"))
                .ok()
                .and_then(|s| serde_json::from_str(&s).ok());
            if existing.as_ref() == Some(&persisted) {
                let encoder = ToyEncoder::load(&run_dir)?;
                return Ok(AdaptedModel {
                    encoder: Arc::new(encoder),
                    losses: read_losses(&run_dir.join("loss-log"))?,
                    run_id,
                    run_dir,
                    reused: true,
                });
            }
        }

        // Documents longer than the encoder window are split, never dropped.
        let window = self.tokenizer.max_subtokens.saturating_sub(2).max(1);
        let docs: Vec<Vec<usize>> = corpus
            .documents
            .iter()
            .flat_map(|d| {
                let words = crate::text::tokenize_words(d);
                let pieces: Vec<String> = words.iter().flat_map(|w| super::split_word(&w.text)).collect();
                let ids = self.ids(&pieces);
                ids.chunks(window).map(<[usize]>::to_vec).collect::<Vec<_>>()
            })
            .filter(|ids| !ids.is_empty())
            .collect();
        let (embeddings, losses) = self.adapt_embeddings(&docs, config);

        fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
        let bytes: Vec<u8> = embeddings.iter().flat_map(|v| v.to_le_bytes()).collect();
        write_file(&run_dir.join("weights"), &bytes)?;
        let log: String = losses
            .iter()
            .enumerate()
            .map(|(epoch, loss)| format!("{epoch}\t{loss}\n"))
            .collect();
        write_file(&run_dir.join("loss-log"), log.as_bytes())?;
        write_file(&run_dir.join("config"), config_json.as_bytes())?;

        let encoder = ToyEncoder::from_embeddings(
            self.weights.shape,
            self.weights.seed,
            embeddings,
            self.tokenizer.max_subtokens,
        );
        Ok(AdaptedModel {
            encoder: Arc::new(encoder),
            run_id,
            run_dir,
            losses,
            reused: false,
        })
    }

    fn finetune_classifier(
        &self,
        examples: &[(String, Polarity)],
        config: &FinetuneConfig,
    ) -> Result<Box<dyn SequenceClassifier>> {
        if examples.is_empty() {
            return Err(Error::Argument("no training examples".into()));
        }
        let features: Vec<Vec<f64>> = examples
            .iter()
            .map(|(text, _)| Ok(self.final_hidden(text)?.pool_all_words()?.values))
            .collect::<Result<_>>()?;
        let h = self.hidden_size();
        let mut weights = vec![vec![0.0; h + 1]; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let probs = class_probs(&weights, &features[i]);
                for (c, w) in weights.iter_mut().enumerate() {
                    let target = if examples[i].1.index() == c { 1.0 } else { 0.0 };
                    let d = probs[c] - target;
                    for j in 0..h {
                        w[j] -= config.learning_rate * d * features[i][j];
                    }
                    w[h] -= config.learning_rate * d;
                }
            }
        }
        Ok(Box::new(ToyClassifier {
            encoder: ToyEncoder {
                weights: Arc::clone(&self.weights),
                tokenizer: self.tokenizer,
                labels: LabelCache::default(),
            },
            weights,
        }))
    }
}

fn class_probs(weights: &[Vec<f64>], x: &[f64]) -> [f64; 3] {
    let h = x.len();
    let mut logits = [0.0; 3];
    for (c, w) in weights.iter().enumerate() {
        logits[c] = dot(&w[..h], x) + w[h];
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.map(|l| (l - max).exp());
    let sum: f64 = exps.iter().sum();
    exps.map(|e| e / sum)
}

struct ToyClassifier {
    encoder: ToyEncoder,
    weights: Vec<Vec<f64>>,
}

impl SequenceClassifier for ToyClassifier {
    fn predict(&self, text: &str) -> Result<Polarity> {
        let x = self.encoder.final_hidden(text)?.pool_all_words()?.values;
        let probs = class_probs(&self.weights, &x);
        let best = (0..3).fold(0, |b, c| if probs[c] > probs[b] { c } else { b });
        Ok(Polarity::ALL[best])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn small() -> ToyEncoder {
        ToyEncoder::new(
            ToyShape {
                vocab: 256,
                hidden: 16,
                layers: 4,
                heads: 2,
            },
            7,
        )
    }

    fn corpus() -> TextCorpus {
        let docs = [
            "the battery life is great",
            "great battery and a bright screen",
            "the screen is bright and sharp",
            "keyboard feels cheap and flimsy",
            "the fajitas were great",
            "service was slow but friendly",
            "the battery died after an hour",
            "bright screen great keyboard",
            "slow service and cold fajitas",
            "friendly staff and great food",
        ];
        TextCorpus {
            documents: docs.iter().map(|s| s.to_string()).collect(),
            provenance: vec![],
        }
    }

    #[test]
    fn attention_is_row_stochastic_and_deterministic() {
        let m = small();
        let a = m.attention_maps("the battery life is great", &[0, 1, 2, 3]).unwrap();
        a.check_row_stochastic().unwrap();
        assert_eq!(a, m.attention_maps("the battery life is great", &[0, 1, 2, 3]).unwrap());
        assert_eq!(a.d_k, 8);
        assert!(m.attention_maps("x", &[4]).is_err());
    }

    #[test]
    fn embeddings_have_hidden_dimension() {
        let m = small();
        let v = m.embed_span("great battery", &BTreeSet::from([0, 1])).unwrap();
        assert_eq!(v.dim(), 16);
        assert!(v.values.iter().all(|x| x.is_finite()));
        let p = m.embed_label(Polarity::Positive).unwrap();
        assert_ne!(p, m.embed_label(Polarity::Negative).unwrap());
    }

    #[test]
    fn adaptation_persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let m = small();
        let config = AdaptationConfig {
            epochs: 1,
            learning_rate: 0.5,
            batch_size: 2,
            grad_accum_steps: 1,
            ..Default::default()
        };
        let adapted = m.domain_adapt(&corpus(), &config, dir.path()).unwrap();
        assert!(!adapted.reused);
        assert_eq!(adapted.losses.len(), 2);
        for f in ["weights", "config", "loss-log"] {
            assert!(adapted.run_dir.join(f).is_file(), "{f} missing");
        }
        assert_ne!(adapted.encoder.fingerprint(), m.fingerprint());
        let again = m.domain_adapt(&corpus(), &config, dir.path()).unwrap();
        assert!(again.reused);
        assert_eq!(again.run_id, adapted.run_id);
        assert_eq!(again.encoder.fingerprint(), adapted.encoder.fingerprint());
        assert_eq!(again.losses, adapted.losses);
        // original state untouched
        assert_eq!(m.fingerprint(), small().fingerprint());
    }

    #[test]
    fn same_seed_gives_identical_weights() {
        let config = AdaptationConfig {
            epochs: 1,
            learning_rate: 0.5,
            ..Default::default()
        };
        let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let a = small().domain_adapt(&corpus(), &config, da.path()).unwrap();
        let b = small().domain_adapt(&corpus(), &config, db.path()).unwrap();
        assert_eq!(
            fs::read(a.run_dir.join("weights")).unwrap(),
            fs::read(b.run_dir.join("weights")).unwrap()
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let shape = ToyShape {
            vocab: 8,
            hidden: 4,
            layers: 1,
            heads: 1,
        };
        let mut rng = stream(3, &[]);
        let emb: Vec<f64> = (0..shape.vocab * shape.hidden).map(|_| symmetric(&mut rng)).collect();
        let docs = vec![vec![3, 4, 5, 6], vec![7, 3, 4]];
        let masks = vec![vec![1], vec![0, 2]];
        let mut grad = vec![0.0; emb.len()];
        mlm_loss(&emb, shape, &docs, &masks, Some(&mut grad));
        let eps = 1e-6;
        for k in 0..emb.len() {
            let mut plus = emb.clone();
            plus[k] += eps;
            let mut minus = emb.clone();
            minus[k] -= eps;
            let numeric = (mlm_loss(&plus, shape, &docs, &masks, None) - mlm_loss(&minus, shape, &docs, &masks, None))
                / (2.0 * eps);
            assert!((numeric - grad[k]).abs() < 1e-6, "param {k}: {numeric} vs {}", grad[k]);
        }
    }

    #[test]
    fn classifier_trains() {
        let m = small();
        let examples: Vec<(String, Polarity)> = (0..20)
            .map(|i| {
                let (t, p) = match i % 3 {
                    0 => ("great food [SEP] food", Polarity::Positive),
                    1 => ("awful slow service [SEP] service", Polarity::Negative),
                    _ => ("the menu is on the table [SEP] menu", Polarity::Neutral),
                };
                (t.to_string(), p)
            })
            .collect();
        let clf = m
            .finetune_classifier(
                &examples,
                &FinetuneConfig {
                    epochs: 30,
                    learning_rate: 0.5,
                    seed: 1,
                },
            )
            .unwrap();
        let correct = examples.iter().filter(|(t, p)| clf.predict(t).unwrap() == *p).count();
        assert_eq!(correct, examples.len());
    }
}
