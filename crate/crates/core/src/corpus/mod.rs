//! Datasets of review sentences with aspect annotations, plus raw text
//! corpora used for domain adaptation.

mod adaptation;
mod annotations;
mod jsonl;
mod sampling;
mod semeval;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{char_len, slice_chars, Span};

pub use adaptation::{build_adaptation_corpus, read_text_corpus, SourceDescriptor, TextCorpus};
pub use annotations::attach_opinion_annotations;
pub use jsonl::{read_dataset_jsonl, write_dataset_jsonl};
pub use sampling::{sample_labeled_fraction, shuffled_labeled_order};
pub use semeval::parse_semeval_xml;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Laptop,
    Restaurant,
    Other,
}

impl Domain {
    /// `L14` is a laptop dataset, `R14`..`R16` are restaurant datasets.
    pub fn from_dataset_name(name: &str) -> Domain {
        match name.chars().next().map(|c| c.to_ascii_uppercase()) {
            Some('L') => Domain::Laptop,
            Some('R') => Domain::Restaurant,
            _ => Domain::Other,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Domain::Laptop => 'L',
            Domain::Restaurant => 'R',
            Domain::Other => 'O',
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Laptop => "laptop",
            Domain::Restaurant => "restaurant",
            Domain::Other => "other",
        })
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "laptop" | "laptops" | "l" => Ok(Domain::Laptop),
            "restaurant" | "restaurants" | "r" => Ok(Domain::Restaurant),
            "other" | "o" => Ok(Domain::Other),
            other => Err(Error::Argument(format!("unknown domain `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Argument(format!("unknown split `{other}`"))),
        }
    }
}

/// Sentiment polarity. The declaration order is the tie-break order used
/// wherever labels compete.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Neutral];

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(Polarity::Positive),
            "negative" => Ok(Polarity::Negative),
            "neutral" => Ok(Polarity::Neutral),
            other => Err(Error::Argument(format!("unknown polarity `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSentence {
    pub id: String,
    pub text: String,
    pub domain: Domain,
    pub split: Split,
}

/// One evaluation unit: an aspect occurrence in a sentence with its gold
/// opinion spans and polarity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectInstance {
    pub sentence_id: String,
    pub aspect_span: Span,
    pub aspect_text: String,
    #[serde(default)]
    pub gold_opinions: Vec<Span>,
    #[serde(default)]
    pub gold_polarity: Option<Polarity>,
}

impl AspectInstance {
    /// Checks the span invariants against the sentence text.
    pub fn validate(&self, text: &str) -> std::result::Result<(), String> {
        let n = char_len(text);
        if !self.aspect_span.within(n) {
            return Err(format!(
                "aspect span {} outside sentence of {n} characters",
                self.aspect_span
            ));
        }
        let found = slice_chars(text, self.aspect_span).unwrap_or_default();
        if found != self.aspect_text {
            return Err(format!(
                "aspect text `{}` does not match `{found}` at {}",
                self.aspect_text, self.aspect_span
            ));
        }
        for op in &self.gold_opinions {
            if !op.within(n) {
                return Err(format!("opinion span {op} outside sentence"));
            }
            if op.overlaps(&self.aspect_span) {
                return Err(format!("opinion span {op} overlaps the aspect"));
            }
        }
        Ok(())
    }

    pub fn has_gold_opinions(&self) -> bool {
        !self.gold_opinions.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub sentences: Vec<RawSentence>,
    pub instances: Vec<AspectInstance>,
}

impl Dataset {
    /// Builds a dataset, checking every invariant. Instances are reordered
    /// (stably) to follow sentence order.
    pub fn new(
        name: impl Into<String>,
        sentences: Vec<RawSentence>,
        mut instances: Vec<AspectInstance>,
    ) -> Result<Self> {
        let name = name.into();
        let mut index = HashMap::with_capacity(sentences.len());
        for (i, s) in sentences.iter().enumerate() {
            if s.text.is_empty() {
                return Err(Error::Argument(format!("sentence `{}` has empty text", s.id)));
            }
            if index.insert(s.id.as_str(), i).is_some() {
                return Err(Error::Argument(format!("duplicate sentence id `{}`", s.id)));
            }
        }
        for inst in &instances {
            let Some(&si) = index.get(inst.sentence_id.as_str()) else {
                return Err(Error::Argument(format!(
                    "instance references unknown sentence `{}`",
                    inst.sentence_id
                )));
            };
            inst.validate(&sentences[si].text)
                .map_err(|e| Error::Argument(format!("sentence `{}`: {e}", inst.sentence_id)))?;
        }
        instances.sort_by_key(|inst| index[inst.sentence_id.as_str()]);
        Ok(Dataset {
            name,
            sentences,
            instances,
        })
    }

    pub fn domain(&self) -> Domain {
        Domain::from_dataset_name(&self.name)
    }

    pub fn sentence(&self, id: &str) -> Option<&RawSentence> {
        self.sentences.iter().find(|s| s.id == id)
    }

    pub fn sentence_index(&self) -> HashMap<&str, &RawSentence> {
        self.sentences.iter().map(|s| (s.id.as_str(), s)).collect()
    }

    /// Instances whose sentence belongs to `split`, paired with the sentence.
    pub fn instances_in(&self, split: Split) -> Vec<(&RawSentence, &AspectInstance)> {
        let index = self.sentence_index();
        self.instances
            .iter()
            .filter_map(|inst| {
                let s = index[inst.sentence_id.as_str()];
                (s.split == split).then_some((s, inst))
            })
            .collect()
    }

    pub fn aooe_eligible_count(&self) -> usize {
        self.instances.iter().filter(|i| i.has_gold_opinions()).count()
    }

    /// SHA-256 of the dataset's JSONL form; equal digests mean equal data.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(jsonl::dataset_to_jsonl(self).as_bytes()))
    }

    /// Concatenates two datasets of the same name (e.g. train and test files).
    pub fn merge(self, other: Dataset) -> Result<Dataset> {
        let mut sentences = self.sentences;
        sentences.extend(other.sentences);
        let mut instances = self.instances;
        instances.extend(other.instances);
        Dataset::new(self.name, sentences, instances)
    }
}

/// A non-fatal problem found while loading input; the offending item was
/// skipped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Warning {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// A loaded value together with the warnings produced while loading it.
#[derive(Clone, Debug)]
pub struct Loaded<T> {
    pub value: T,
    pub warnings: Vec<Warning>,
}
