//! Encoder served by a child process over line-delimited JSON.
//!
//! Each request is one JSON object on the child's stdin; each reply one
//! object on its stdout. A reply carrying `"error"` fails the call.
//!
//! | request | reply |
//! |---------|-------|
//! | `{"op":"info"}` | `{"name","layers","heads","hidden","d_k","max_subtokens","fingerprint"}` |
//! | `{"op":"encode","words":[..],"layers":[..]}` | `{"n_subtokens","word_spans":[[s,e)..],"special":[..],"attention":[layer][head][row][col],"hidden":[pos][dim]}` |
//! | `{"op":"adapt","documents":[..],"config":{..},"run_dir":".."}` | `{"losses":[..],"model_path":".."}` |
//!
//! The adapted state is opened by spawning the same command with
//! `ABSA_BRIDGE_MODEL` set to the returned `model_path`.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Mutex};

use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{
    AdaptationConfig, AdaptedModel, AttentionView, EmbeddingVector, Encoder, HiddenStates, LabelCache, Matrix,
    TokenAlignment,
};
use crate::corpus::{Polarity, TextCorpus};
use crate::error::{Error, Result};
use crate::text::tokenize_words;

pub const MODEL_ENV: &str = "ABSA_BRIDGE_MODEL";

#[derive(Deserialize)]
struct Info {
    name: String,
    layers: usize,
    heads: usize,
    hidden: usize,
    d_k: usize,
    max_subtokens: usize,
    fingerprint: String,
}

#[derive(Deserialize)]
struct Encoded {
    n_subtokens: usize,
    word_spans: Vec<[usize; 2]>,
    special: Vec<usize>,
    #[serde(default)]
    attention: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    hidden: Vec<Vec<f64>>,
}

struct Channel {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct ExternalEncoder {
    command: String,
    model_path: Option<String>,
    info: Info,
    channel: Mutex<Channel>,
    labels: LabelCache,
}

impl ExternalEncoder {
    /// Starts `command` through the shell and queries its shape.
    pub fn spawn(command: &str) -> Result<Self> {
        ExternalEncoder::spawn_with_model(command, None)
    }

    fn spawn_with_model(command: &str, model_path: Option<&str>) -> Result<Self> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        if let Some(p) = model_path {
            cmd.env(MODEL_ENV, p);
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| Error::External(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let channel = Mutex::new(Channel { child, stdin, stdout });
        let reply = request(&channel, &json!({"op": "info"}))?;
        let info: Info = serde_json::from_value(reply).map_err(|e| Error::External(format!("bad info reply: {e}")))?;
        if info.layers == 0 || info.heads == 0 {
            return Err(Error::External("bridge reports an empty model".into()));
        }
        Ok(ExternalEncoder {
            command: command.to_string(),
            model_path: model_path.map(str::to_string),
            info,
            channel,
            labels: LabelCache::default(),
        })
    }

    fn encode(&self, text: &str, layers: &[usize]) -> Result<(TokenAlignment, Encoded)> {
        if text.trim().is_empty() {
            return Err(Error::Argument("cannot tokenize empty text".into()));
        }
        super::check_layers(layers, self.info.layers)?;
        let words = tokenize_words(text);
        let texts: Vec<&str> = words.iter().map(|w| w.text.as_str()).collect();
        let reply = request(
            &self.channel,
            &json!({"op": "encode", "words": texts, "layers": layers}),
        )?;
        let enc: Encoded =
            serde_json::from_value(reply).map_err(|e| Error::External(format!("bad encode reply: {e}")))?;
        if enc.n_subtokens > self.info.max_subtokens {
            return Err(Error::TooLong {
                len: enc.n_subtokens,
                limit: self.info.max_subtokens,
            });
        }
        if enc.word_spans.len() != words.len() {
            return Err(Error::External(format!(
                "bridge aligned {} words, expected {}",
                enc.word_spans.len(),
                words.len()
            )));
        }
        let alignment = TokenAlignment {
            words,
            subtoken_spans: enc.word_spans.iter().map(|[s, e]| *s..*e).collect(),
            special_token_indices: enc.special.iter().copied().collect::<BTreeSet<_>>(),
            n_subtokens: enc.n_subtokens,
        };
        alignment.validate()?;
        Ok((alignment, enc))
    }
}

fn request(channel: &Mutex<Channel>, body: &Value) -> Result<Value> {
    let mut ch = channel
        .lock()
        .map_err(|_| Error::External("bridge channel poisoned".into()))?;
    let line = serde_json::to_string(body).expect("requests serialize");
    writeln!(ch.stdin, "{line}")
        .and_then(|_| ch.stdin.flush())
        .map_err(|e| Error::External(format!("write to bridge failed: {e}")))?;
    let mut reply = String::new();
    let n = ch
        .stdout
        .read_line(&mut reply)
        .map_err(|e| Error::External(format!("read from bridge failed: {e}")))?;
    if n == 0 {
        return Err(Error::External("bridge closed its output".into()));
    }
    let value: Value =
        serde_json::from_str(&reply).map_err(|e| Error::External(format!("bridge sent invalid JSON: {e}")))?;
    if let Some(err) = value.get("error") {
        return Err(Error::External(err.to_string()));
    }
    Ok(value)
}

impl Drop for ExternalEncoder {
    fn drop(&mut self) {
        if let Ok(mut ch) = self.channel.lock() {
            let _ = ch.child.kill();
            let _ = ch.child.wait();
        }
    }
}

impl Encoder for ExternalEncoder {
    fn name(&self) -> &str {
        "external"
    }

    fn fingerprint(&self) -> String {
        format!("external:{}:{}", self.info.name, self.info.fingerprint)
    }

    fn num_layers(&self) -> usize {
        self.info.layers
    }

    fn num_heads(&self) -> usize {
        self.info.heads
    }

    fn hidden_size(&self) -> usize {
        self.info.hidden
    }

    fn tokenize_with_alignment(&self, text: &str) -> Result<TokenAlignment> {
        Ok(self.encode(text, &[])?.0)
    }

    fn attention_maps(&self, text: &str, layers: &[usize]) -> Result<AttentionView> {
        let (alignment, enc) = self.encode(text, layers)?;
        let heads = enc
            .attention
            .into_iter()
            .map(|layer| layer.into_iter().map(Matrix::from_rows).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let view = AttentionView::new(layers.to_vec(), self.info.heads, self.info.d_k, heads)?;
        if view.n_subtokens() != alignment.n_subtokens {
            return Err(Error::External("attention size differs from the alignment".into()));
        }
        Ok(view)
    }

    fn final_hidden(&self, text: &str) -> Result<HiddenStates> {
        let (alignment, enc) = self.encode(text, &[])?;
        if enc.hidden.len() != alignment.n_subtokens || enc.hidden.iter().any(|v| v.len() != self.info.hidden) {
            return Err(Error::External("hidden states have the wrong shape".into()));
        }
        Ok(HiddenStates {
            alignment,
            layer: self.info.layers - 1,
            vectors: enc.hidden,
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
        let mut hasher = Sha256::new();
        hasher.update(self.fingerprint().as_bytes());
        hasher.update(serde_json::to_vec(config).expect("config serializes"));
        for d in &corpus.documents {
            hasher.update((d.len() as u64).to_le_bytes());
            hasher.update(d.as_bytes());
        }
        let run_id = hex::encode(&hasher.finalize()[..8]);
        let run_dir = run_root.join(&run_id);
        std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
        let reply = request(
            &self.channel,
            &json!({
                "op": "adapt",
                "documents": corpus.documents,
                "config": config,
                "run_dir": run_dir,
            }),
        )?;
        let losses: Vec<f64> = reply
            .get("losses")
            .and_then(|l| serde_json::from_value(l.clone()).ok())
            .unwrap_or_default();
        let model_path = reply
            .get("model_path")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::External("adapt reply lacks `model_path`".into()))?;
        let encoder = ExternalEncoder::spawn_with_model(&self.command, Some(model_path))?;
        Ok(AdaptedModel {
            encoder: Arc::new(encoder),
            run_id,
            run_dir,
            losses,
            reused: false,
        })
    }
}

impl std::fmt::Debug for ExternalEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalEncoder")
            .field("command", &self.command)
            .field("model_path", &self.model_path)
            .finish()
    }
}
