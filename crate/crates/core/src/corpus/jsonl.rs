use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AspectInstance, Dataset, Domain, RawSentence, Split};
use crate::error::{Error, Result};
use crate::text::Span;

#[derive(Serialize, Deserialize)]
struct SentenceRecord {
    dataset: String,
    id: String,
    text: String,
    domain: Domain,
    split: Split,
    instances: Vec<InstanceRecord>,
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    aspect: Span,
    aspect_text: String,
    #[serde(default)]
    gold_opinions: Vec<Span>,
    #[serde(default)]
    gold_polarity: Option<super::Polarity>,
}

/// Writes one JSON object per sentence, instances nested.
pub fn write_dataset_jsonl(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(dataset_to_jsonl(dataset).as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn dataset_to_jsonl(dataset: &Dataset) -> String {
    let mut buf = String::new();
    for s in &dataset.sentences {
        let record = SentenceRecord {
            dataset: dataset.name.clone(),
            id: s.id.clone(),
            text: s.text.clone(),
            domain: s.domain,
            split: s.split,
            instances: dataset
                .instances
                .iter()
                .filter(|i| i.sentence_id == s.id)
                .map(|i| InstanceRecord {
                    aspect: i.aspect_span,
                    aspect_text: i.aspect_text.clone(),
                    gold_opinions: i.gold_opinions.clone(),
                    gold_polarity: i.gold_polarity,
                })
                .collect(),
        };
        buf.push_str(&serde_json::to_string(&record).expect("dataset records serialize"));
        buf.push('\n');
    }
    buf
}

/// Reads a dataset written by [`write_dataset_jsonl`]. The file stem names
/// the dataset when the file holds no sentences.
pub fn read_dataset_jsonl(path: &Path) -> Result<Dataset> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fallback = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    dataset_from_jsonl(&body, path, &fallback)
}

pub(crate) fn dataset_from_jsonl(body: &str, path: &Path, fallback_name: &str) -> Result<Dataset> {
    let mut name = None;
    let mut sentences = Vec::new();
    let mut instances = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: SentenceRecord = serde_json::from_str(line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        match &name {
            None => name = Some(rec.dataset.clone()),
            Some(n) if *n != rec.dataset => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("dataset `{}` mixed into `{n}`", rec.dataset),
                })
            }
            _ => {}
        }
        for inst in rec.instances {
            instances.push(AspectInstance {
                sentence_id: rec.id.clone(),
                aspect_span: inst.aspect,
                aspect_text: inst.aspect_text,
                gold_opinions: inst.gold_opinions,
                gold_polarity: inst.gold_polarity,
            });
        }
        sentences.push(RawSentence {
            id: rec.id,
            text: rec.text,
            domain: rec.domain,
            split: rec.split,
        });
    }
    Dataset::new(name.unwrap_or_else(|| fallback_name.to_string()), sentences, instances)
}
