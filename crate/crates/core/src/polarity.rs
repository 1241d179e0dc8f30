//! Zero-shot polarity: the opinion's contextual embedding is compared to the
//! embeddings of the label words by cosine similarity.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::backend::{EmbeddingVector, Encoder};
use crate::corpus::Polarity;
use crate::error::{Error, Result};
use crate::selector::{Fallback, OpinionPrediction};

/// Label vectors in the fixed order positive, negative, neutral.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarityLabelSet {
    vectors: [Vec<f64>; 3],
}

impl PolarityLabelSet {
    pub fn new(vectors: [Vec<f64>; 3]) -> Result<Self> {
        let dim = vectors[0].len();
        for (label, v) in Polarity::ALL.iter().zip(&vectors) {
            if v.len() != dim || dim == 0 {
                return Err(Error::Consistency("label vectors differ in dimension".into()));
            }
            if norm(v) == 0.0 || !norm(v).is_finite() {
                return Err(Error::DegenerateEmbedding(format!(
                    "label `{label}` embeds to a zero vector"
                )));
            }
        }
        Ok(PolarityLabelSet { vectors })
    }

    /// Embeds the bare label words with `encoder`.
    pub fn from_encoder(encoder: &dyn Encoder) -> Result<Self> {
        let [p, n, u] = Polarity::ALL.map(|l| encoder.embed_label(l));
        PolarityLabelSet::new([p?.values, n?.values, u?.values])
    }

    pub fn vector(&self, label: Polarity) -> &[f64] {
        &self.vectors[label.index()]
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarityPrediction {
    pub label: Polarity,
    /// Cosine similarity to positive, negative and neutral.
    pub similarities: [f64; 3],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolarityOptions {
    /// When set, a winner that beats the runner-up by less than this becomes
    /// neutral. Off by default.
    pub margin: Option<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (norm(a) * norm(b))
}

/// Argmax of cosine similarity; exact ties go to the earlier label.
pub fn assign_polarity(
    opinion: &[f64],
    labels: &PolarityLabelSet,
    options: &PolarityOptions,
) -> Result<PolarityPrediction> {
    if opinion.len() != labels.dim() {
        return Err(Error::Consistency(format!(
            "opinion embedding has {} dimensions, labels {}",
            opinion.len(),
            labels.dim()
        )));
    }
    let n = norm(opinion);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::DegenerateEmbedding(
            "opinion embedding has zero or non-finite norm".into(),
        ));
    }
    // Normalizing first makes the result invariant to the scale of the input
    // up to the rounding of this one division.
    let unit: Vec<f64> = opinion.iter().map(|x| x / n).collect();
    let similarities = Polarity::ALL.map(|l| cosine(&unit, labels.vector(l)));
    let mut best = 0;
    for i in 1..3 {
        if similarities[i] > similarities[best] {
            best = i;
        }
    }
    let mut label = Polarity::ALL[best];
    if let Some(margin) = options.margin {
        let runner_up = (0..3)
            .filter(|&i| i != best)
            .map(|i| similarities[i])
            .fold(f64::NEG_INFINITY, f64::max);
        if similarities[best] - runner_up < margin {
            label = Polarity::Neutral;
        }
    }
    Ok(PolarityPrediction { label, similarities })
}

/// Embeds the predicted opinion in its sentence and labels it; after a
/// sentence fallback the whole sentence is embedded instead.
pub fn classify_instance(
    prediction: &OpinionPrediction,
    sentence: &str,
    encoder: &dyn Encoder,
    labels: &PolarityLabelSet,
    options: &PolarityOptions,
) -> Result<PolarityPrediction> {
    let embedding: EmbeddingVector =
        if prediction.fallback == Fallback::SentenceFallback || prediction.phrase.is_empty() {
            encoder.final_hidden(sentence)?.pool_all_words()?
        } else {
            let words: BTreeSet<usize> = prediction.phrase.iter().copied().collect();
            encoder.embed_span(sentence, &words)?
        };
    assign_polarity(&embedding.values, labels, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockEncoder;
    use proptest::prelude::*;

    fn basis() -> PolarityLabelSet {
        PolarityLabelSet::new([vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap()
    }

    #[test]
    fn basis_case() {
        let p = assign_polarity(&[0.9, 0.1, 0.0], &basis(), &Default::default()).unwrap();
        assert_eq!(p.label, Polarity::Positive);
        let n = (0.82f64).sqrt();
        assert!((p.similarities[0] - 0.9 / n).abs() < 1e-12);
        assert!((p.similarities[1] - 0.1 / n).abs() < 1e-12);
        assert_eq!(p.similarities[2], 0.0);
    }

    #[test]
    fn exact_tie_goes_to_positive() {
        let p = assign_polarity(&[0.5, 0.5, 0.0], &basis(), &Default::default()).unwrap();
        assert_eq!(p.label, Polarity::Positive);
        let q = assign_polarity(&[0.0, 0.5, 0.5], &basis(), &Default::default()).unwrap();
        assert_eq!(q.label, Polarity::Negative);
    }

    #[test]
    fn zero_vector_is_degenerate() {
        assert!(matches!(
            assign_polarity(&[0.0; 3], &basis(), &Default::default()),
            Err(Error::DegenerateEmbedding(_))
        ));
        assert!(PolarityLabelSet::new([vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn margin_turns_close_calls_neutral() {
        let opts = PolarityOptions { margin: Some(0.2) };
        let p = assign_polarity(&[0.6, 0.5, 0.0], &basis(), &opts).unwrap();
        assert_eq!(p.label, Polarity::Neutral);
        let p = assign_polarity(&[0.9, 0.1, 0.0], &basis(), &opts).unwrap();
        assert_eq!(p.label, Polarity::Positive);
    }

    #[test]
    fn rigged_opinion_is_positive() {
        let text = "The fajitas are great";
        let pos = vec![1.0, 0.0, 0.0, 0.0];
        let neg = vec![0.0, 1.0, 0.0, 0.0];
        let neu = vec![0.0, 0.0, 1.0, 0.0];
        let enc = MockEncoder::new(3)
            .with_shape(4, 2, 4)
            .rig_label(Polarity::Positive, pos)
            .rig_label(Polarity::Negative, neg)
            .rig_label(Polarity::Neutral, neu)
            .rig_word_vector(text, 3, vec![0.8, 0.1, 0.3, 0.2]);
        let labels = PolarityLabelSet::from_encoder(&enc).unwrap();
        let pred = OpinionPrediction {
            phrase: vec![3],
            head: Some(3),
            text: "great".into(),
            score: 1.0,
            fallback: Fallback::None,
        };
        let a = classify_instance(&pred, text, &enc, &labels, &Default::default()).unwrap();
        assert_eq!(a.label, Polarity::Positive);
        assert_eq!(
            a,
            classify_instance(&pred, text, &enc, &labels, &Default::default()).unwrap()
        );
    }

    #[test]
    fn sentence_fallback_embeds_all_words() {
        let text = "I ordered the fish";
        let enc = MockEncoder::new(8);
        let labels = PolarityLabelSet::from_encoder(&enc).unwrap();
        let pred = OpinionPrediction {
            phrase: vec![],
            head: None,
            text: String::new(),
            score: 0.0,
            fallback: Fallback::SentenceFallback,
        };
        let got = classify_instance(&pred, text, &enc, &labels, &Default::default()).unwrap();
        let all = enc.embed_span(text, &(0..4).collect()).unwrap();
        let want = assign_polarity(&all.values, &labels, &Default::default()).unwrap();
        assert_eq!(got, want);
    }

    fn arb_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0f64..1.0, 5).prop_filter("non-zero", |v| norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn scale_invariant(h in arb_vec(), p in arb_vec(), n in arb_vec(), u in arb_vec(), lambda in 1e-3f64..1e3) {
            let labels = PolarityLabelSet::new([p, n, u]).unwrap();
            let a = assign_polarity(&h, &labels, &Default::default()).unwrap();
            let scaled: Vec<f64> = h.iter().map(|x| x * lambda).collect();
            let b = assign_polarity(&scaled, &labels, &Default::default()).unwrap();
            prop_assert_eq!(a.label, b.label);
            for i in 0..3 {
                prop_assert!((a.similarities[i] - b.similarities[i]).abs() < 1e-12);
                prop_assert!(a.similarities[i].abs() <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn label_permutation_covariance(h in arb_vec(), p in arb_vec(), n in arb_vec(), u in arb_vec()) {
            let a = assign_polarity(&h, &PolarityLabelSet::new([p.clone(), n.clone(), u.clone()]).unwrap(), &Default::default()).unwrap();
            // rotate: positive <- neutral vector, negative <- positive, neutral <- negative
            let b = assign_polarity(&h, &PolarityLabelSet::new([u, p, n]).unwrap(), &Default::default()).unwrap();
            prop_assert_eq!(a.similarities, [b.similarities[1], b.similarities[2], b.similarities[0]]);
            let winner = |s: [f64; 3]| (0..3).fold(0, |best, i| if s[i] > s[best] { i } else { best });
            let wa = winner(a.similarities);
            prop_assert_eq!(Polarity::ALL[(wa + 1) % 3] , b.label);
        }
    }
}
