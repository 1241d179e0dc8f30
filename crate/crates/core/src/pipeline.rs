//! The full per-dataset pipeline and its prediction dump.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::Encoder;
use crate::corpus::{AspectInstance, Dataset, Polarity, RawSentence, Split};
use crate::error::{Error, Result};
use crate::polarity::{classify_instance, PolarityLabelSet, PolarityOptions};
use crate::selector::{Fallback, PreparedSentence, SelectorConfig};
use crate::syntax::{Annotator, PatternRegistry};
use crate::text::Span;

/// One line of the prediction dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sentence_id: String,
    pub aspect: String,
    pub aspect_span: Span,
    pub predicted_opinion: String,
    pub opinion_words: Vec<usize>,
    pub head_index: Option<usize>,
    pub score: f64,
    pub fallback: Fallback,
    pub polarity: Polarity,
    pub sim_pos: f64,
    pub sim_neg: f64,
    pub sim_neu: f64,
    /// Aggregated word scores, present with `--dump-attention`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<Vec<f64>>,
}

/// Everything needed to turn sentences into predictions.
pub struct Pipeline {
    encoder: Arc<dyn Encoder>,
    annotator: Arc<dyn Annotator>,
    patterns: PatternRegistry,
    selector: SelectorConfig,
    polarity: PolarityOptions,
    labels: PolarityLabelSet,
    dump_attention: bool,
}

impl Pipeline {
    /// Label vectors come from `label_encoder`, or from `encoder` if none.
    pub fn new(
        encoder: Arc<dyn Encoder>,
        annotator: Arc<dyn Annotator>,
        patterns: PatternRegistry,
        selector: SelectorConfig,
        polarity: PolarityOptions,
        label_encoder: Option<&dyn Encoder>,
    ) -> Result<Self> {
        let labels = PolarityLabelSet::from_encoder(label_encoder.unwrap_or(encoder.as_ref()))?;
        if labels.dim() != encoder.hidden_size() {
            return Err(Error::Config(
                "label vectors and opinion embeddings come from encoders of different width".into(),
            ));
        }
        Ok(Pipeline {
            encoder,
            annotator,
            patterns,
            selector,
            polarity,
            labels,
            dump_attention: false,
        })
    }

    pub fn with_attention_dump(mut self, on: bool) -> Self {
        self.dump_attention = on;
        self
    }

    pub fn encoder(&self) -> &Arc<dyn Encoder> {
        &self.encoder
    }

    /// Predictions for the given aspects of one sentence.
    pub fn run_sentence(&self, sentence: &RawSentence, instances: &[&AspectInstance]) -> Result<Vec<PredictionRecord>> {
        let prepared = PreparedSentence::new(
            &sentence.text,
            self.encoder.as_ref(),
            self.annotator.as_ref(),
            &self.patterns,
            &self.selector.layers,
        )?;
        let mut out = Vec::with_capacity(instances.len());
        for inst in instances {
            let ex = prepared.extract(inst, &self.selector)?;
            let pol = classify_instance(
                &ex.prediction,
                &sentence.text,
                self.encoder.as_ref(),
                &self.labels,
                &self.polarity,
            )?;
            let p = ex.prediction;
            out.push(PredictionRecord {
                sentence_id: sentence.id.clone(),
                aspect: inst.aspect_text.clone(),
                aspect_span: inst.aspect_span,
                predicted_opinion: p.text,
                opinion_words: p.phrase,
                head_index: p.head,
                score: p.score,
                fallback: p.fallback,
                polarity: pol.label,
                sim_pos: pol.similarities[0],
                sim_neg: pol.similarities[1],
                sim_neu: pol.similarities[2],
                attention: self.dump_attention.then_some(ex.scores.scores),
            });
        }
        Ok(out)
    }

    /// Predictions for every aspect of `split`, in dataset order.
    pub fn run_dataset(&self, dataset: &Dataset, split: Split) -> Result<Vec<PredictionRecord>> {
        let mut grouped: BTreeMap<usize, (&RawSentence, Vec<&AspectInstance>)> = BTreeMap::new();
        let order: BTreeMap<&str, usize> = dataset
            .sentences
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();
        for (s, inst) in dataset.instances_in(split) {
            grouped
                .entry(order[s.id.as_str()])
                .or_insert((s, Vec::new()))
                .1
                .push(inst);
        }
        let groups: Vec<_> = grouped.into_values().collect();
        let per_sentence: Vec<Vec<PredictionRecord>> = groups
            .par_iter()
            .map(|(s, insts)| {
                self.run_sentence(s, insts)
                    .map_err(|e| e.context(format!("{} sentence {}", dataset.name, s.id)))
            })
            .collect::<Result<_>>()?;
        Ok(per_sentence.into_iter().flatten().collect())
    }
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
