use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceDescriptor {
    Dataset { name: String, documents: usize },
    File { path: PathBuf, documents: usize },
}

/// Ordered raw documents used for masked-token adaptation.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextCorpus {
    pub documents: Vec<String>,
    pub provenance: Vec<SourceDescriptor>,
}

impl TextCorpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

/// Reads a plain-text corpus, one document per non-blank line.
pub fn read_text_corpus(path: &Path) -> Result<Vec<String>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(body
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// Train-split sentences of each dataset (in order), then every external
/// file's lines. Duplicates are kept.
pub fn build_adaptation_corpus(datasets: &[&Dataset], extra_paths: &[PathBuf]) -> Result<TextCorpus> {
    let mut corpus = TextCorpus::default();
    for ds in datasets {
        let before = corpus.documents.len();
        corpus.documents.extend(
            ds.sentences
                .iter()
                .filter(|s| s.split == Split::Train && !s.text.trim().is_empty())
                .map(|s| s.text.clone()),
        );
        corpus.provenance.push(SourceDescriptor::Dataset {
            name: ds.name.clone(),
            documents: corpus.documents.len() - before,
        });
    }
    for path in extra_paths {
        let docs = read_text_corpus(path)?;
        corpus.provenance.push(SourceDescriptor::File {
            path: path.clone(),
            documents: docs.len(),
        });
        corpus.documents.extend(docs);
    }
    if corpus.documents.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(corpus)
}
