//! Experiment plans and the matrix runner.
//!
//! A plan names a setting, an adaptation mode, the test datasets and the
//! seeds. Every (plan, dataset, seed) triple is a cell with its own directory
//! under `<output>/<config-hash>/cells/`. Cells that already hold a
//! `metrics.json` are skipped, so an interrupted run resumes where it stopped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::finetune::finetune_atsc;
use super::metrics::{join_with_gold, score, Scores, Task};
use super::report::{render_report, MetricsReport, ReportFormat};
use crate::backend::{AdaptationConfig, Encoder, FinetuneConfig};
use crate::corpus::{build_adaptation_corpus, Dataset, Domain, Split};
use crate::error::{Error, ErrorKind, Result};
use crate::pipeline::{write_predictions, Pipeline};
use crate::polarity::PolarityOptions;
use crate::selector::SelectorConfig;
use crate::syntax::{Annotator, PatternRegistry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    InDomain,
    CrossDomain,
    JointDomain,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::InDomain => "in_domain",
            Setting::CrossDomain => "cross_domain",
            Setting::JointDomain => "joint_domain",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "in_domain" | "in" => Ok(Setting::InDomain),
            "cross_domain" | "cross" => Ok(Setting::CrossDomain),
            "joint_domain" | "joint" => Ok(Setting::JointDomain),
            other => Err(Error::Config(format!("unknown setting `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptationMode {
    /// Adapt on the train-split text the setting designates.
    With,
    Without,
    /// Adapt on external corpus files only.
    Massive,
}

impl AdaptationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AdaptationMode::With => "with",
            AdaptationMode::Without => "without",
            AdaptationMode::Massive => "massive",
        }
    }
}

impl fmt::Display for AdaptationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdaptationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "with" => Ok(AdaptationMode::With),
            "without" => Ok(AdaptationMode::Without),
            "massive" => Ok(AdaptationMode::Massive),
            other => Err(Error::Config(format!("unknown adaptation mode `{other}`"))),
        }
    }
}

pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub id: String,
    pub setting: Setting,
    pub adaptation: AdaptationMode,
    /// Domains the adaptation text comes from. Ignored for in-domain plans.
    pub train_domains: Vec<Domain>,
    pub test_datasets: Vec<String>,
    pub seeds: Vec<u64>,
    /// Set for supervised fine-tuning plans.
    pub labeled_fraction: Option<f64>,
    pub extra_corpus: Vec<PathBuf>,
}

impl ExperimentPlan {
    pub fn new(id: impl Into<String>, setting: Setting, test_datasets: &[&str]) -> Self {
        ExperimentPlan {
            id: id.into(),
            setting,
            adaptation: AdaptationMode::Without,
            train_domains: Vec::new(),
            test_datasets: test_datasets.iter().map(|s| s.to_string()).collect(),
            seeds: DEFAULT_SEEDS.to_vec(),
            labeled_fraction: None,
            extra_corpus: Vec::new(),
        }
    }

    fn invalid(&self, msg: impl fmt::Display) -> Error {
        Error::Config(format!("plan `{}`: {msg}", self.id))
    }

    fn train_domain_set(&self) -> BTreeSet<Domain> {
        self.train_domains.iter().copied().collect()
    }

    pub fn validate(&self, datasets: &BTreeMap<String, Dataset>) -> Result<()> {
        if self.id.is_empty()
            || !self
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(Error::Config(format!(
                "plan id `{}` must be non-empty ASCII letters, digits, `-` or `_`",
                self.id
            )));
        }
        if self.seeds.is_empty() {
            return Err(self.invalid("no seeds"));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(self.invalid("seeds repeat"));
        }
        if let Some(f) = self.labeled_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(self.invalid(format!("labeled fraction {f} outside (0, 1]")));
            }
        }
        if self.test_datasets.is_empty() {
            return Err(self.invalid("no test datasets"));
        }
        let train = self.train_domain_set();
        for name in &self.test_datasets {
            let ds = datasets
                .get(name)
                .ok_or_else(|| self.invalid(format!("test dataset `{name}` is not loaded")))?;
            let domain = ds.domain();
            match self.setting {
                Setting::InDomain if !train.is_empty() && train != BTreeSet::from([domain]) => {
                    return Err(self.invalid(format!("in-domain plan trains outside the {domain} domain of {name}")));
                }
                Setting::CrossDomain if train.is_empty() || train.contains(&domain) => {
                    return Err(self.invalid(format!(
                        "cross-domain plan needs train domains different from the {domain} domain of {name}"
                    )));
                }
                Setting::JointDomain if train.len() < 2 || !train.contains(&domain) => {
                    return Err(self.invalid(format!(
                        "joint-domain plan needs the {domain} domain of {name} plus at least one other"
                    )));
                }
                _ => {}
            }
        }
        match self.adaptation {
            AdaptationMode::Massive if self.extra_corpus.is_empty() => {
                return Err(self.invalid("massive adaptation needs extra corpus files"));
            }
            AdaptationMode::Without if !self.extra_corpus.is_empty() => {
                return Err(self.invalid("extra corpus files given without adaptation"));
            }
            AdaptationMode::With if self.setting != Setting::InDomain => {
                for d in &train {
                    if !datasets.values().any(|ds| ds.domain() == *d) {
                        return Err(self.invalid(format!("no loaded dataset for train domain {d}")));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// `R14`, `L→R14` or `L+R→R14`.
    pub fn label(&self, test: &str) -> String {
        if self.setting == Setting::InDomain {
            return test.to_string();
        }
        let train: Vec<String> = self.train_domain_set().iter().map(|d| d.letter().to_string()).collect();
        format!("{}→{test}", train.join("+"))
    }

    /// Datasets whose train split feeds the adaptation corpus.
    fn adaptation_sources(&self, test: &str, datasets: &BTreeMap<String, Dataset>) -> Vec<String> {
        match (self.adaptation, self.setting) {
            (AdaptationMode::Without | AdaptationMode::Massive, _) => Vec::new(),
            (AdaptationMode::With, Setting::InDomain) => vec![test.to_string()],
            (AdaptationMode::With, _) => {
                let train = self.train_domain_set();
                datasets
                    .values()
                    .filter(|ds| train.contains(&ds.domain()))
                    .map(|ds| ds.name.clone())
                    .collect()
            }
        }
    }
}

/// Which model embeds the label words.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// The same (possibly adapted) model as the opinions.
    #[default]
    Adapted,
    /// The base model, even after adaptation.
    Base,
}

impl FromStr for LabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "adapted" => Ok(LabelSource::Adapted),
            "base" => Ok(LabelSource::Base),
            other => Err(Error::Config(format!("unknown label source `{other}`"))),
        }
    }
}

/// One line of a cell's `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub task: Task,
    pub dataset: String,
    pub setting: Setting,
    pub seed: u64,
    pub accuracy: f64,
    pub n_eligible: usize,
    pub plan: String,
    pub adaptation: AdaptationMode,
    /// False when adaptation was requested but the backend cannot do it.
    pub adapted: bool,
    pub label: String,
}

/// Shared inputs of every cell.
pub struct ExperimentContext {
    pub datasets: BTreeMap<String, Dataset>,
    pub encoder: Arc<dyn Encoder>,
    pub annotator: Arc<dyn Annotator>,
    pub patterns: PatternRegistry,
    pub selector: SelectorConfig,
    pub polarity: PolarityOptions,
    pub labels_from: LabelSource,
    pub adaptation: AdaptationConfig,
    pub finetune: FinetuneConfig,
    /// Parent of the run directories.
    pub output: PathBuf,
    /// Where adapted model states are persisted.
    pub model_cache: PathBuf,
    pub jobs: usize,
    pub dump_attention: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellFailure {
    pub cell_id: String,
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub run_dir: PathBuf,
    pub report: MetricsReport,
    pub failures: Vec<CellFailure>,
    /// Cells whose metrics were found on disk.
    pub resumed: usize,
    /// Cells computed by this call.
    pub computed: usize,
}

#[derive(Serialize)]
struct HashInput<'a> {
    plans: &'a [ExperimentPlan],
    backend: String,
    annotator: String,
    patterns: &'a [crate::syntax::OpinionRelationPattern],
    mod_relations: &'a [String],
    selector: &'a SelectorConfig,
    polarity: &'a PolarityOptions,
    labels_from: LabelSource,
    adaptation: &'a AdaptationConfig,
    finetune: &'a FinetuneConfig,
    datasets: BTreeMap<&'a str, String>,
    extra_corpus: BTreeMap<String, String>,
}

/// Hash of everything that can change a metric.
pub fn config_hash(plans: &[ExperimentPlan], ctx: &ExperimentContext) -> Result<String> {
    let mut extra_corpus = BTreeMap::new();
    for path in plans.iter().flat_map(|p| &p.extra_corpus) {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        extra_corpus.insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
    }
    let input = HashInput {
        plans,
        backend: ctx.encoder.fingerprint(),
        annotator: ctx.annotator.fingerprint(),
        patterns: ctx.patterns.list_patterns(),
        mod_relations: ctx.patterns.mod_relations(),
        selector: &ctx.selector,
        polarity: &ctx.polarity,
        labels_from: ctx.labels_from,
        adaptation: &ctx.adaptation,
        finetune: &ctx.finetune,
        datasets: ctx.datasets.iter().map(|(k, v)| (k.as_str(), v.digest())).collect(),
        extra_corpus,
    };
    let bytes = serde_json::to_vec(&input).expect("hash input serializes");
    Ok(hex::encode(&Sha256::digest(&bytes)[..8]))
}

/// Writes through a sibling temporary file so readers never see half a file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct AdaptKey {
    datasets: Vec<String>,
    extra: Vec<PathBuf>,
    seed: u64,
}

#[derive(Clone)]
enum AdaptResult {
    Adapted(Arc<dyn Encoder>),
    Unsupported(String),
    Failed(ErrorKind, String),
}

struct Cell<'a> {
    plan: &'a ExperimentPlan,
    dataset: &'a str,
    seed: u64,
    id: String,
    dir: PathBuf,
}

impl Cell<'_> {
    fn adapt_key(&self, datasets: &BTreeMap<String, Dataset>) -> Option<AdaptKey> {
        (self.plan.adaptation != AdaptationMode::Without).then(|| AdaptKey {
            datasets: self.plan.adaptation_sources(self.dataset, datasets),
            extra: self.plan.extra_corpus.clone(),
            seed: self.seed,
        })
    }
}

struct CellOutput {
    rows: Vec<MetricRow>,
    notes: Vec<String>,
}

const METRICS_FILE: &str = "metrics.json";
const NOTES_FILE: &str = "notes.txt";
const PREDICTIONS_FILE: &str = "predictions.jsonl";

/// Runs every cell of every plan, resuming from any earlier run with the
/// same configuration hash.
pub fn run_experiment(plans: &[ExperimentPlan], ctx: &ExperimentContext) -> Result<ExperimentOutcome> {
    if plans.is_empty() {
        return Err(Error::Config("no experiment plans".into()));
    }
    let mut ids = BTreeSet::new();
    for plan in plans {
        plan.validate(&ctx.datasets)?;
        if !ids.insert(plan.id.as_str()) {
            return Err(Error::Config(format!("plan id `{}` used twice", plan.id)));
        }
    }
    let hash = config_hash(plans, ctx)?;
    let run_dir = ctx.output.join(&hash);
    let cells_dir = run_dir.join("cells");
    let cells: Vec<Cell> = plans
        .iter()
        .flat_map(|plan| {
            let cells_dir = &cells_dir;
            plan.test_datasets.iter().flat_map(move |ds| {
                plan.seeds.iter().map(move |&seed| {
                    let id = format!("{}.{ds}.s{seed}", plan.id);
                    let dir = cells_dir.join(&id);
                    Cell {
                        plan,
                        dataset: ds,
                        seed,
                        id,
                        dir,
                    }
                })
            })
        })
        .collect();

    let mut done: BTreeMap<usize, CellOutput> = BTreeMap::new();
    for (i, cell) in cells.iter().enumerate() {
        if let Some(out) = load_cell(&cell.dir)? {
            log::info!("{}: already done, skipping", cell.id);
            done.insert(i, out);
        }
    }
    let resumed = done.len();
    let pending: Vec<usize> = (0..cells.len()).filter(|i| !done.contains_key(i)).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.jobs.max(1))
        .build()
        .map_err(|e| Error::Consistency(format!("cannot start worker pool: {e}")))?;

    let keys: BTreeSet<AdaptKey> = pending
        .iter()
        .filter_map(|&i| cells[i].adapt_key(&ctx.datasets))
        .collect();
    let adapted: BTreeMap<AdaptKey, AdaptResult> = pool.install(|| {
        keys.into_par_iter()
            .map(|key| {
                let res = adapt(&key, ctx);
                (key, res)
            })
            .collect()
    });

    let results: Vec<(usize, Result<CellOutput>)> = pool.install(|| {
        pending
            .par_iter()
            .map(|&i| {
                let cell = &cells[i];
                let adaptation = cell.adapt_key(&ctx.datasets).map(|k| adapted[&k].clone());
                (
                    i,
                    run_cell(cell, adaptation, ctx).map_err(|e| e.context(format!("cell {}", cell.id))),
                )
            })
            .collect()
    });

    let mut failures = Vec::new();
    let computed = results.iter().filter(|(_, r)| r.is_ok()).count();
    for (i, res) in results {
        match res {
            Ok(out) => {
                done.insert(i, out);
            }
            Err(e) => {
                log::error!("{e}");
                failures.push(CellFailure {
                    cell_id: cells[i].id.clone(),
                    kind: e.kind(),
                    message: e.to_string(),
                });
            }
        }
    }

    let mut report = MetricsReport {
        model: ctx.encoder.fingerprint(),
        config_hash: hash,
        rows: Vec::new(),
        notes: Vec::new(),
    };
    for (i, out) in done {
        report.rows.extend(out.rows);
        report
            .notes
            .extend(out.notes.into_iter().map(|n| format!("{}: {n}", cells[i].id)));
    }
    report
        .notes
        .extend(failures.iter().map(|f| format!("{}: failed: {}", f.cell_id, f.message)));

    write_atomic(
        &run_dir.join("report.json"),
        (serde_json::to_string_pretty(&report).expect("report serializes") + "\n").as_bytes(),
    )?;
    if !report.rows.is_empty() {
        for (format, file) in [(ReportFormat::Markdown, "report.md"), (ReportFormat::Csv, "report.csv")] {
            write_atomic(&run_dir.join(file), render_report(&report, format)?.as_bytes())?;
        }
    }
    write_run_info(&run_dir, &report, plans)?;
    Ok(ExperimentOutcome {
        run_dir,
        report,
        failures,
        resumed,
        computed,
    })
}

/// `run.json` is the only file that carries a wall-clock time.
fn write_run_info(run_dir: &Path, report: &MetricsReport, plans: &[ExperimentPlan]) -> Result<()> {
    let finished = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let info = serde_json::json!({
        "config_hash": report.config_hash,
        "model": report.model,
        "plans": plans,
        "finished_unix": finished,
    });
    write_atomic(
        &run_dir.join("run.json"),
        (serde_json::to_string_pretty(&info).expect("run info serializes") + "\n").as_bytes(),
    )
}

fn load_cell(dir: &Path) -> Result<Option<CellOutput>> {
    let path = dir.join(METRICS_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let body = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let rows = serde_json::from_str(&body).map_err(|e| Error::Format {
        path: path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let notes_path = dir.join(NOTES_FILE);
    let notes = match std::fs::read_to_string(&notes_path) {
        Ok(s) => s.lines().map(str::to_string).collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(Error::io(notes_path, e)),
    };
    Ok(Some(CellOutput { rows, notes }))
}

fn adapt(key: &AdaptKey, ctx: &ExperimentContext) -> AdaptResult {
    let attempt = || -> Result<Arc<dyn Encoder>> {
        let sources: Vec<&Dataset> = key.datasets.iter().map(|n| &ctx.datasets[n]).collect();
        let corpus = build_adaptation_corpus(&sources, &key.extra)?;
        let config = AdaptationConfig {
            seed: key.seed,
            ..ctx.adaptation.clone()
        };
        let model = ctx.encoder.domain_adapt(&corpus, &config, &ctx.model_cache)?;
        log::info!(
            "adapted on {} document(s) (seed {}): run {}{}",
            corpus.len(),
            key.seed,
            model.run_id,
            if model.reused { ", reused" } else { "" }
        );
        Ok(model.encoder)
    };
    match attempt() {
        Ok(enc) => AdaptResult::Adapted(enc),
        Err(e) if e.is_capability() => {
            log::warn!("{e}; running without adaptation");
            AdaptResult::Unsupported(format!("{e}; ran without adaptation"))
        }
        Err(e) => AdaptResult::Failed(e.kind(), e.to_string()),
    }
}

fn run_cell(cell: &Cell, adaptation: Option<AdaptResult>, ctx: &ExperimentContext) -> Result<CellOutput> {
    let dataset = &ctx.datasets[cell.dataset];
    let mut notes = Vec::new();
    let (encoder, adapted) = match adaptation {
        None => (ctx.encoder.clone(), false),
        Some(AdaptResult::Adapted(enc)) => (enc, true),
        Some(AdaptResult::Unsupported(note)) => {
            notes.push(note);
            (ctx.encoder.clone(), false)
        }
        Some(AdaptResult::Failed(kind, message)) => {
            return Err(Error::Shared {
                kind,
                message: format!("adaptation failed: {message}"),
            });
        }
    };
    let row = |task: Task, accuracy: f64, n_eligible: usize| MetricRow {
        task,
        dataset: dataset.name.clone(),
        setting: cell.plan.setting,
        seed: cell.seed,
        accuracy,
        n_eligible,
        plan: cell.plan.id.clone(),
        adaptation: cell.plan.adaptation,
        adapted,
        label: cell.plan.label(&dataset.name),
    };

    let rows = if let Some(fraction) = cell.plan.labeled_fraction {
        let config = FinetuneConfig {
            seed: cell.seed,
            ..ctx.finetune.clone()
        };
        let out = finetune_atsc(dataset, fraction, encoder.as_ref(), &config)?;
        let mut body = String::new();
        for p in &out.predictions {
            body.push_str(&serde_json::to_string(p).expect("prediction serializes"));
            body.push('\n');
        }
        write_atomic(&cell.dir.join(PREDICTIONS_FILE), body.as_bytes())?;
        vec![row(Task::AtscFinetuned, out.accuracy, out.predictions.len())]
    } else {
        let label_encoder = (ctx.labels_from == LabelSource::Base).then(|| ctx.encoder.as_ref());
        let pipeline = Pipeline::new(
            encoder,
            ctx.annotator.clone(),
            ctx.patterns.clone(),
            ctx.selector.clone(),
            ctx.polarity,
            label_encoder,
        )?
        .with_attention_dump(ctx.dump_attention);
        let records = pipeline.run_dataset(dataset, Split::Test)?;
        if records.is_empty() {
            return Err(Error::Argument(format!(
                "dataset `{}` has no test instances",
                dataset.name
            )));
        }
        let predictions = cell.dir.join(PREDICTIONS_FILE);
        let mut tmp = predictions.as_os_str().to_owned();
        tmp.push(".tmp");
        write_predictions(Path::new(&tmp), &records)?;
        std::fs::rename(&tmp, &predictions).map_err(|e| Error::io(&predictions, e))?;
        let scores = score(&join_with_gold(dataset, Split::Test, &records)?)?;
        check_bounds(&scores)?;
        [Task::Aooe, Task::Atsc, Task::Aoospe]
            .into_iter()
            .filter_map(|t| scores.get(t).map(|s| row(t, s.accuracy, s.n_eligible)))
            .collect()
    };
    if !notes.is_empty() {
        write_atomic(&cell.dir.join(NOTES_FILE), (notes.join("\n") + "\n").as_bytes())?;
    }
    let json = serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n";
    write_atomic(&cell.dir.join(METRICS_FILE), json.as_bytes())?;
    Ok(CellOutput { rows, notes })
}

/// Joint correctness can never outnumber either part. The accuracy form of
/// that bound only holds when all three tasks share one denominator.
pub fn check_bounds(scores: &Scores) -> Result<()> {
    let Some(both) = scores.aoospe else {
        return Ok(());
    };
    let (Some(op), Some(pol)) = (scores.aooe, scores.atsc) else {
        return Err(Error::Consistency("joint task scored without both parts".into()));
    };
    if both.n_correct > op.n_correct.min(pol.n_correct) {
        return Err(Error::Consistency(format!(
            "{} joint hits exceed {} opinion or {} polarity hits",
            both.n_correct, op.n_correct, pol.n_correct
        )));
    }
    let shared = both.n_eligible == op.n_eligible && both.n_eligible == pol.n_eligible;
    if shared && both.accuracy > op.accuracy.min(pol.accuracy) {
        return Err(Error::Consistency("joint accuracy exceeds a part".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockEncoder;
    use crate::corpus::fixtures::{located, sentence};
    use crate::corpus::Polarity;
    use crate::evaluation::TaskScore;
    use crate::syntax::RuleAnnotator;

    fn dataset(name: &str) -> Dataset {
        let rows = [
            (
                "a",
                "The fajitas are great but the service was slow",
                "service",
                "slow",
                Polarity::Negative,
            ),
            ("b", "Great battery life", "battery life", "Great", Polarity::Positive),
            ("c", "The screen is bright", "screen", "bright", Polarity::Positive),
        ];
        let mut sentences = vec![sentence("t", "The staff were friendly", Split::Train)];
        let mut instances = vec![located(
            "t",
            "The staff were friendly",
            "staff",
            &["friendly"],
            Some(Polarity::Positive),
        )];
        for (id, text, aspect, op, pol) in rows {
            sentences.push(sentence(id, text, Split::Test));
            instances.push(located(id, text, aspect, &[op], Some(pol)));
        }
        Dataset::new(name, sentences, instances).unwrap()
    }

    fn context(output: &Path) -> ExperimentContext {
        ExperimentContext {
            datasets: ["L14", "R14"]
                .map(|n| (n.to_string(), dataset(n)))
                .into_iter()
                .collect(),
            encoder: Arc::new(MockEncoder::new(42)),
            annotator: Arc::new(RuleAnnotator::new()),
            patterns: PatternRegistry::default(),
            selector: SelectorConfig::default(),
            polarity: PolarityOptions::default(),
            labels_from: LabelSource::default(),
            adaptation: AdaptationConfig::default(),
            finetune: FinetuneConfig::default(),
            output: output.join("runs"),
            model_cache: output.join("models"),
            jobs: 2,
            dump_attention: false,
        }
    }

    fn plans() -> Vec<ExperimentPlan> {
        let mut cross = ExperimentPlan::new("cross", Setting::CrossDomain, &["R14"]);
        cross.train_domains = vec![Domain::Laptop];
        cross.adaptation = AdaptationMode::With;
        cross.seeds = vec![1, 2];
        let mut inside = ExperimentPlan::new("in", Setting::InDomain, &["L14", "R14"]);
        inside.seeds = vec![1, 2];
        vec![inside, cross]
    }

    #[test]
    fn labels() {
        let mut p = ExperimentPlan::new("x", Setting::JointDomain, &["R14"]);
        p.train_domains = vec![Domain::Restaurant, Domain::Laptop];
        assert_eq!(p.label("R14"), "L+R→R14");
        p.setting = Setting::CrossDomain;
        p.train_domains = vec![Domain::Laptop];
        assert_eq!(p.label("R14"), "L→R14");
        p.setting = Setting::InDomain;
        assert_eq!(p.label("R14"), "R14");
    }

    #[test]
    fn validation() {
        let ds = context(Path::new("/nonexistent")).datasets;
        let mut p = ExperimentPlan::new("bad", Setting::CrossDomain, &["R14"]);
        p.train_domains = vec![Domain::Restaurant];
        assert!(p.validate(&ds).is_err());
        p.train_domains = vec![Domain::Laptop];
        assert!(p.validate(&ds).is_ok());
        p.seeds = vec![1, 1];
        assert!(p.validate(&ds).is_err());
        p.seeds = vec![];
        assert!(p.validate(&ds).is_err());
        p.seeds = vec![3];
        p.adaptation = AdaptationMode::Massive;
        assert!(p.validate(&ds).is_err());
        p.adaptation = AdaptationMode::Without;
        p.test_datasets = vec!["R99".into()];
        assert!(p.validate(&ds).is_err());
        p.test_datasets = vec!["R14".into()];
        p.id = "no/slash".into();
        assert!(p.validate(&ds).is_err());
    }

    #[test]
    fn matrix_runs_resumes_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = context(dir.path());
        let first = run_experiment(&plans(), &ctx).unwrap();
        assert!(first.failures.is_empty(), "{:?}", first.failures);
        assert_eq!((first.computed, first.resumed), (6, 0));
        assert_eq!(first.report.rows.len(), 18);
        let cell = first.run_dir.join("cells/cross.R14.s1");
        let notes = std::fs::read_to_string(cell.join("notes.txt")).unwrap();
        assert!(notes.contains("without adaptation"));
        assert!(first
            .report
            .rows
            .iter()
            .filter(|r| r.plan == "cross")
            .all(|r| !r.adapted && r.label == "L→R14"));
        let metrics = std::fs::read(cell.join("metrics.json")).unwrap();

        let second = run_experiment(&plans(), &ctx).unwrap();
        assert_eq!((second.computed, second.resumed), (0, 6));
        assert_eq!(second.report.rows, first.report.rows);

        let other = tempfile::tempdir().unwrap();
        let third = run_experiment(&plans(), &context(other.path())).unwrap();
        assert_eq!(third.run_dir.file_name(), first.run_dir.file_name());
        assert_eq!(
            std::fs::read(third.run_dir.join("cells/cross.R14.s1/metrics.json")).unwrap(),
            metrics
        );
    }

    #[test]
    fn failed_cells_do_not_stop_the_rest() {
        let dir = tempfile::tempdir().unwrap();
        let mut ctx = context(dir.path());
        let empty = Dataset::new("R15", vec![sentence("x", "Nice place", Split::Train)], vec![]).unwrap();
        ctx.datasets.insert("R15".into(), empty);
        let plan = ExperimentPlan {
            seeds: vec![1],
            ..ExperimentPlan::new("in", Setting::InDomain, &["R15", "R14"])
        };
        let out = run_experiment(&[plan], &ctx).unwrap();
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].cell_id, "in.R15.s1");
        assert_eq!(out.failures[0].kind, ErrorKind::Input);
        assert_eq!(out.computed, 1);
    }

    #[test]
    fn hash_tracks_configuration() {
        let dir = tempfile::tempdir().unwrap();
        let mut ctx = context(dir.path());
        let a = config_hash(&plans(), &ctx).unwrap();
        ctx.selector.tie_break = crate::selector::TieBreak::Highest;
        assert_ne!(a, config_hash(&plans(), &ctx).unwrap());
    }

    #[test]
    fn bounds() {
        let t = |c, n| {
            Some(TaskScore {
                accuracy: c as f64 / n as f64,
                n_correct: c,
                n_eligible: n,
            })
        };
        assert!(check_bounds(&Scores {
            aooe: t(3, 4),
            atsc: t(2, 4),
            aoospe: t(2, 4)
        })
        .is_ok());
        assert!(check_bounds(&Scores {
            aooe: t(3, 4),
            atsc: t(1, 4),
            aoospe: t(2, 4)
        })
        .is_err());
        // mixed eligibility: accuracy may exceed a part
        assert!(check_bounds(&Scores {
            aooe: t(1, 2),
            atsc: t(1, 1),
            aoospe: t(1, 1)
        })
        .is_ok());
    }
}
