use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use absa_core::backend::open_backend;
use absa_core::config::{override_entry, read_entries, Entry, RunConfig};
use absa_core::corpus::{
    attach_opinion_annotations, build_adaptation_corpus, parse_semeval_xml, read_dataset_jsonl, write_dataset_jsonl,
    Dataset, Split,
};
use absa_core::evaluation::{
    check_bounds, join_with_gold, render_report, run_experiment, score, write_atomic, ExperimentContext, MetricsReport,
    ReportFormat, Task,
};
use absa_core::pipeline::{read_predictions, write_predictions, Pipeline};
use absa_core::selector::Fallback;
use absa_core::syntax::open_annotator;
use absa_core::Error;
use anyhow::{Context, Result};

use crate::{exit_code, Cli, Command};

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("1 {word}")
    } else {
        format!("{n} {word}s")
    }
}

fn load_config(cli: &Cli, plan_files: &[PathBuf]) -> Result<RunConfig> {
    let mut entries: Vec<Entry> = Vec::new();
    if let Some(path) = &cli.config {
        entries.extend(read_entries(path)?);
    }
    for path in plan_files {
        entries.extend(read_entries(path)?);
    }
    for spec in &cli.overrides {
        entries.push(override_entry(spec)?);
    }
    if let Some(seed) = cli.seed {
        for key in ["run.seeds", "adapt.seed", "finetune.seed"] {
            entries.push(override_entry(&format!("{key}={seed}"))?);
        }
    }
    if let Some(jobs) = cli.jobs {
        entries.push(override_entry(&format!("run.jobs={jobs}"))?);
    }
    Ok(RunConfig::from_entries(&entries)?)
}

fn model_cache(cli: &Cli, cfg: &RunConfig) -> PathBuf {
    cli.model_cache
        .clone()
        .or_else(|| cfg.model_cache.clone())
        .unwrap_or_else(|| cfg.output.join("models"))
}

/// A configured dataset name, or else a path to a dataset JSONL file.
fn load_dataset(cfg: &RunConfig, spec: &str) -> Result<Dataset> {
    match cfg.datasets.get(spec) {
        Some(path) => {
            let mut ds = read_dataset_jsonl(path)?;
            ds.name = spec.to_string();
            Ok(ds)
        }
        None => Ok(read_dataset_jsonl(Path::new(spec))?),
    }
}

pub fn run(cli: Cli) -> Result<u8> {
    match &cli.command {
        Command::Prepare {
            name,
            train,
            test,
            opinions,
            out,
            lenient,
        } => prepare(name, train.as_deref(), test.as_deref(), opinions, out, *lenient),
        Command::Adapt { datasets, corpus } => adapt(&cli, datasets, corpus),
        Command::Extract {
            dataset,
            split,
            out,
            dump_attention,
        } => extract(&cli, dataset, split, out, *dump_attention),
        Command::Evaluate {
            dataset,
            split,
            predictions,
            out,
        } => evaluate(&cli, dataset, split, predictions, out.as_deref()),
        Command::Matrix { plans, dump_attention } => matrix(&cli, plans, *dump_attention),
        Command::Report { run_dir, format, out } => report(run_dir, format, out.as_deref()),
    }
}

fn prepare(
    name: &str,
    train: Option<&Path>,
    test: Option<&Path>,
    opinions: &[PathBuf],
    out: &Path,
    lenient: bool,
) -> Result<u8> {
    let mut dataset: Option<Dataset> = None;
    let mut warnings = Vec::new();
    for (path, split) in [(train, Split::Train), (test, Split::Test)] {
        let Some(path) = path else { continue };
        let loaded = parse_semeval_xml(path, name, split)?;
        warnings.extend(loaded.warnings);
        dataset = Some(match dataset {
            Some(d) => d.merge(loaded.value)?,
            None => loaded.value,
        });
    }
    let mut dataset = dataset.ok_or_else(|| Error::Argument("give --train and/or --test".into()))?;
    for path in opinions {
        let loaded = attach_opinion_annotations(dataset, path)?;
        warnings.extend(loaded.warnings);
        dataset = loaded.value;
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if !warnings.is_empty() && !lenient {
        return Err(Error::Argument(format!(
            "{}; rerun with --lenient to skip the offending items",
            plural(warnings.len(), "warning")
        ))
        .into());
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_dataset_jsonl(&dataset, out)?;
    println!(
        "{name}: {}, {}",
        plural(dataset.sentences.len(), "sentence"),
        plural(dataset.instances.len(), "instance")
    );
    if !warnings.is_empty() {
        println!("skipped: {}", plural(warnings.len(), "warning"));
    }
    Ok(0)
}

fn adapt(cli: &Cli, names: &[String], corpus_files: &[PathBuf]) -> Result<u8> {
    let cfg = load_config(cli, &[])?;
    let names: Vec<String> = if names.is_empty() && corpus_files.is_empty() {
        cfg.datasets.keys().cloned().collect()
    } else {
        names.to_vec()
    };
    let datasets = names
        .iter()
        .map(|n| load_dataset(&cfg, n))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Dataset> = datasets.iter().collect();
    let corpus = build_adaptation_corpus(&refs, corpus_files)?;
    let encoder = open_backend(&cfg.backend)?;
    let cache = model_cache(cli, &cfg);
    let model = encoder
        .domain_adapt(&corpus, &cfg.adaptation, &cache)
        .context("domain adaptation")?;
    println!("run {}", model.run_id);
    println!("directory {}", model.run_dir.display());
    if model.reused {
        println!("reused an identical earlier run");
    }
    for (epoch, loss) in model.losses.iter().enumerate() {
        println!("epoch {epoch}\tloss {loss:.6}");
    }
    Ok(0)
}

fn extract(cli: &Cli, dataset: &str, split: &str, out: &Path, dump_attention: bool) -> Result<u8> {
    let cfg = load_config(cli, &[])?;
    let dataset = load_dataset(&cfg, dataset)?;
    let split: Split = split.parse()?;
    let n = dataset.instances_in(split).len();
    if n == 0 {
        return Err(Error::Argument(format!("dataset `{}` has no {split:?} instances", dataset.name)).into());
    }
    let pipeline = Pipeline::new(
        open_backend(&cfg.backend)?,
        open_annotator(&cfg.annotator)?,
        cfg.patterns.clone(),
        cfg.selector.clone(),
        cfg.polarity,
        None,
    )?
    .with_attention_dump(dump_attention);
    let records = pipeline.run_dataset(&dataset, split)?;
    write_predictions(out, &records)?;
    let fallbacks = |f: Fallback| records.iter().filter(|r| r.fallback == f).count();
    println!(
        "{}: {} ({} by POS fallback, {} by sentence fallback)",
        dataset.name,
        plural(records.len(), "prediction"),
        fallbacks(Fallback::PosFallback),
        fallbacks(Fallback::SentenceFallback)
    );
    Ok(0)
}

fn evaluate(cli: &Cli, dataset: &str, split: &str, predictions: &Path, out: Option<&Path>) -> Result<u8> {
    let cfg = load_config(cli, &[])?;
    let dataset = load_dataset(&cfg, dataset)?;
    let records = read_predictions(predictions)?;
    let results = join_with_gold(&dataset, split.parse()?, &records)?;
    let scores = score(&results)?;
    check_bounds(&scores)?;
    for task in [Task::Aooe, Task::Atsc, Task::Aoospe] {
        match scores.get(task) {
            Some(s) => println!(
                "{:<7}{:>7.2}  ({} of {})",
                task.as_str(),
                100.0 * s.accuracy,
                s.n_correct,
                s.n_eligible
            ),
            None => println!("{:<7}{:>7}  (no eligible instance)", task.as_str(), "absent"),
        }
    }
    if let Some(out) = out {
        let mut json = serde_json::to_string_pretty(&scores).expect("scores serialize");
        json.push('\n');
        write_atomic(out, json.as_bytes())?;
    }
    Ok(0)
}

fn matrix(cli: &Cli, plan_files: &[PathBuf], dump_attention: bool) -> Result<u8> {
    let cfg = load_config(cli, plan_files)?;
    if cfg.plans.is_empty() {
        return Err(Error::Config("no `plan.*` keys in the configuration".into()).into());
    }
    let mut datasets = BTreeMap::new();
    for name in cfg.datasets.keys() {
        datasets.insert(name.clone(), load_dataset(&cfg, name)?);
    }
    let ctx = ExperimentContext {
        datasets,
        encoder: open_backend(&cfg.backend)?,
        annotator: open_annotator(&cfg.annotator)?,
        patterns: cfg.patterns.clone(),
        selector: cfg.selector.clone(),
        polarity: cfg.polarity,
        labels_from: cfg.labels_from,
        adaptation: cfg.adaptation.clone(),
        finetune: cfg.finetune.clone(),
        output: cfg.output.clone(),
        model_cache: model_cache(cli, &cfg),
        jobs: cfg.jobs,
        dump_attention,
    };
    let outcome = run_experiment(&cfg.plans, &ctx)?;
    eprintln!(
        "{}: {} computed, {} resumed, {} failed",
        outcome.run_dir.display(),
        plural(outcome.computed, "cell"),
        outcome.resumed,
        outcome.failures.len()
    );
    if !outcome.report.rows.is_empty() {
        print!("{}", render_report(&outcome.report, ReportFormat::Markdown)?);
    }
    Ok(outcome.failures.first().map_or(0, |f| exit_code(f.kind)))
}

fn report(run_dir: &Path, format: &str, out: Option<&Path>) -> Result<u8> {
    let path = run_dir.join("report.json");
    let body = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let report: MetricsReport = serde_json::from_str(&body).map_err(|e| Error::Format {
        path: path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let text = render_report(&report, format.parse()?)?;
    match out {
        Some(out) => write_atomic(out, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(0)
}
