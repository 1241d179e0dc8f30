use serde::{Deserialize, Serialize};

use crate::backend::{Encoder, FinetuneConfig, SequenceClassifier};
use crate::corpus::{sample_labeled_fraction, Dataset, Polarity, Split};
use crate::error::{Error, Result};
use crate::text::Span;

/// Labeled fractions of the learning-curve analysis.
pub const CURVE_FRACTIONS: [f64; 5] = [0.05, 0.1, 0.25, 0.5, 1.0];

/// Classifier input: the sentence, a separator, then the aspect.
pub fn classifier_input(sentence: &str, aspect: &str) -> String {
    format!("{sentence} [SEP] {aspect}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetunePrediction {
    pub sentence_id: String,
    pub aspect: String,
    pub aspect_span: Span,
    pub polarity: Polarity,
    pub gold_polarity: Polarity,
}

pub struct FinetuneOutcome {
    pub classifier: Box<dyn SequenceClassifier>,
    pub accuracy: f64,
    pub n_train: usize,
    pub predictions: Vec<FinetunePrediction>,
}

/// Trains a three-way classifier on a seeded `fraction` of the labeled
/// train instances and scores it on the labeled test instances.
pub fn finetune_atsc(
    dataset: &Dataset,
    fraction: f64,
    encoder: &dyn Encoder,
    config: &FinetuneConfig,
) -> Result<FinetuneOutcome> {
    let sampled = sample_labeled_fraction(dataset, fraction, config.seed)?;
    let examples: Vec<(String, Polarity)> = sampled
        .instances_in(Split::Train)
        .into_iter()
        .filter_map(|(s, i)| Some((classifier_input(&s.text, &i.aspect_text), i.gold_polarity?)))
        .collect();
    let test: Vec<_> = dataset
        .instances_in(Split::Test)
        .into_iter()
        .filter(|(_, i)| i.gold_polarity.is_some())
        .collect();
    if test.is_empty() {
        return Err(Error::Argument(format!(
            "dataset `{}` has no labeled test instances",
            dataset.name
        )));
    }
    let classifier = encoder.finetune_classifier(&examples, config)?;
    let mut predictions = Vec::with_capacity(test.len());
    for (s, inst) in test {
        let polarity = classifier.predict(&classifier_input(&s.text, &inst.aspect_text))?;
        predictions.push(FinetunePrediction {
            sentence_id: s.id.clone(),
            aspect: inst.aspect_text.clone(),
            aspect_span: inst.aspect_span,
            polarity,
            gold_polarity: inst.gold_polarity.expect("filtered"),
        });
    }
    let correct = predictions.iter().filter(|p| p.polarity == p.gold_polarity).count();
    Ok(FinetuneOutcome {
        classifier,
        accuracy: correct as f64 / predictions.len() as f64,
        n_train: examples.len(),
        predictions,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub n_train: usize,
    pub accuracy: f64,
}

/// One fine-tuning run per fraction, in the order given.
pub fn finetune_curve(
    dataset: &Dataset,
    fractions: &[f64],
    encoder: &dyn Encoder,
    config: &FinetuneConfig,
) -> Result<Vec<CurvePoint>> {
    fractions
        .iter()
        .map(|&fraction| {
            let out = finetune_atsc(dataset, fraction, encoder, config)?;
            Ok(CurvePoint {
                fraction,
                n_train: out.n_train,
                accuracy: out.accuracy,
            })
        })
        .collect()
}
