use std::collections::HashMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{Annotator, AnnotatorToken, CoarsePos};
use crate::error::{Error, Result};

/// Serves parses precomputed by an external tool, stored as CoNLL-U.
///
/// Sentences are looked up by their `# text =` comment. Character offsets
/// are recovered by locating each token form in the text in order.
/// Multiword-token lines (`3-4`) give their surface span to every part.
#[derive(Clone, Debug)]
pub struct ConlluAnnotator {
    path: PathBuf,
    digest: String,
    sentences: HashMap<String, Vec<AnnotatorToken>>,
}

impl ConlluAnnotator {
    pub fn from_file(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str_at(&content, path)
    }

    pub(crate) fn from_str_at(content: &str, path: &Path) -> Result<Self> {
        let mut sentences = HashMap::new();
        let mut block: Vec<(usize, &str)> = Vec::new();
        let lines: Vec<&str> = content.lines().collect();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                if !block.is_empty() {
                    let (text, tokens) = parse_block(&block, path)?;
                    sentences.insert(text, tokens);
                    block.clear();
                }
            } else {
                block.push((i + 1, line));
            }
        }
        if !block.is_empty() {
            let (text, tokens) = parse_block(&block, path)?;
            sentences.insert(text, tokens);
        }
        Ok(ConlluAnnotator {
            path: path.to_path_buf(),
            digest: hex::encode(Sha256::digest(content.as_bytes())),
            sentences,
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

struct Row<'a> {
    line: usize,
    id: usize,
    form: &'a str,
    upos: &'a str,
    head: usize,
    deprel: &'a str,
}

fn parse_block(block: &[(usize, &str)], path: &Path) -> Result<(String, Vec<AnnotatorToken>)> {
    let err = |line: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let first_line = block[0].0;
    let mut text = None;
    let mut rows = Vec::new();
    // multiword ranges: (first id, last id, surface form)
    let mut ranges: Vec<(usize, usize, &str)> = Vec::new();
    for &(line, content) in block {
        if let Some(comment) = content.strip_prefix('#') {
            if let Some(t) = comment.trim_start().strip_prefix("text") {
                if let Some(t) = t.trim_start().strip_prefix('=') {
                    text = Some(t.trim().to_string());
                }
            }
            continue;
        }
        let cols: Vec<&str> = content.split('\t').collect();
        if cols.len() < 8 {
            return Err(err(
                line,
                format!("expected 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        let id = cols[0];
        if id.contains('.') {
            continue; // empty node
        }
        if let Some((a, b)) = id.split_once('-') {
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| err(line, format!("bad range id `{id}`")))
            };
            ranges.push((parse(a)?, parse(b)?, cols[1]));
            continue;
        }
        let id: usize = id.parse().map_err(|_| err(line, format!("bad token id `{id}`")))?;
        let head: usize = cols[6]
            .parse()
            .map_err(|_| err(line, format!("bad head `{}`", cols[6])))?;
        rows.push(Row {
            line,
            id,
            form: cols[1],
            upos: cols[3],
            head,
            deprel: cols[7],
        });
    }
    let text = text.ok_or_else(|| err(first_line, "sentence lacks a `# text =` comment".into()))?;
    for (i, row) in rows.iter().enumerate() {
        if row.id != i + 1 {
            return Err(err(row.line, format!("token ids must run 1..n, found {}", row.id)));
        }
        if row.head > rows.len() {
            return Err(err(row.line, format!("head {} out of range", row.head)));
        }
    }

    let chars: Vec<char> = text.chars().collect();
    let mut cursor = 0;
    let mut locate = |form: &str, line: usize| -> Result<usize> {
        let f: Vec<char> = form.chars().collect();
        let found = (cursor..=chars.len().saturating_sub(f.len()))
            .find(|&s| chars[s..s + f.len()] == f[..])
            .ok_or_else(|| err(line, format!("token `{form}` not found in the sentence text")))?;
        cursor = found + f.len();
        Ok(found)
    };
    let mut tokens = Vec::with_capacity(rows.len());
    let mut i = 0;
    while i < rows.len() {
        let row = &rows[i];
        if let Some(&(a, b, surface)) = ranges.iter().find(|r| r.0 == row.id) {
            let start = locate(surface, row.line)?;
            for part in rows.iter().skip(i).take(b + 1 - a) {
                tokens.push(token(surface, start, part));
            }
            i += b + 1 - a;
        } else {
            let start = locate(row.form, row.line)?;
            tokens.push(token(row.form, start, row));
            i += 1;
        }
    }
    Ok((text, tokens))
}

fn token(text: &str, start: usize, row: &Row<'_>) -> AnnotatorToken {
    AnnotatorToken {
        text: text.to_string(),
        start,
        pos: CoarsePos::from_upos(row.upos),
        head: row.head.checked_sub(1),
        deprel: row.deprel.to_string(),
    }
}

impl Annotator for ConlluAnnotator {
    fn name(&self) -> &str {
        "conllu"
    }

    fn fingerprint(&self) -> String {
        format!("conllu:{}", self.digest)
    }

    fn parse(&self, text: &str) -> Result<Vec<AnnotatorToken>> {
        self.sentences.get(text.trim()).cloned().ok_or_else(|| {
            log::debug!("{}: no parse for `{text}`", self.path.display());
            Error::Capability {
                backend: format!("conllu annotator ({})", self.path.display()),
                capability: "parsing sentences absent from its file",
            }
        })
    }
}
