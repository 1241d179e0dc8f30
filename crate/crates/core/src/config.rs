//! Run configuration: flat `section.key = value` lines.
//!
//! ```text
//! # comments start with '#'
//! backend.kind = mock
//! select.layers = 0,1,2,3
//! dataset.R14 = data/R14.jsonl
//! plan.cross.setting = cross_domain
//! plan.cross.train = laptop
//! plan.cross.test = R14,R15
//! ```
//!
//! Relative paths resolve against the directory of the file they appear in.
//! Later sources (command-line overrides) replace earlier values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::backend::{AdaptationConfig, BackendKind, BackendSpec, FinetuneConfig};
use crate::error::{Error, Result};
use crate::evaluation::{AdaptationMode, ExperimentPlan, LabelSource, Setting, DEFAULT_SEEDS};
use crate::polarity::PolarityOptions;
use crate::selector::SelectorConfig;
use crate::syntax::{AnnotatorKind, AnnotatorSpec, OpinionRelationPattern, PatternRegistry, DEFAULT_MOD_RELATIONS};

/// One `key = value` line and where it came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub origin: String,
    /// Directory that relative paths in `value` resolve against.
    pub base: PathBuf,
}

/// Parses the text of a config file. Keys may appear once per file.
pub fn parse_entries(text: &str, origin: &Path) -> Result<Vec<Entry>> {
    let base = origin.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| Error::Format {
            path: origin.to_path_buf(),
            line: i + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected `section.key = value`, got `{line}`")))?;
        let key = key.trim();
        if !key.contains('.') {
            return Err(bad(format!("key `{key}` has no section prefix")));
        }
        if let Some(first) = seen.insert(key.to_string(), i + 1) {
            return Err(bad(format!("`{key}` already set on line {first}")));
        }
        out.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            origin: format!("{}:{}", origin.display(), i + 1),
            base: base.clone(),
        });
    }
    Ok(out)
}

pub fn read_entries(path: &Path) -> Result<Vec<Entry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_entries(&text, path)
}

/// A `key=value` override given on the command line.
pub fn override_entry(spec: &str) -> Result<Entry> {
    let (key, value) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    Ok(Entry {
        key: key.trim().to_string(),
        value: value.trim().to_string(),
        origin: "command line".into(),
        base: PathBuf::new(),
    })
}

#[derive(Clone, Debug, Default)]
struct PlanDraft {
    setting: Option<Setting>,
    adaptation: Option<AdaptationMode>,
    train: Vec<crate::corpus::Domain>,
    test: Vec<String>,
    seeds: Option<Vec<u64>>,
    fraction: Option<f64>,
    corpus: Vec<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub backend: BackendSpec,
    pub annotator: AnnotatorSpec,
    pub adaptation: AdaptationConfig,
    pub selector: SelectorConfig,
    pub polarity: PolarityOptions,
    pub labels_from: LabelSource,
    pub patterns: PatternRegistry,
    pub finetune: FinetuneConfig,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    /// Overrides the default model cache directory.
    pub model_cache: Option<PathBuf>,
    pub jobs: usize,
    pub datasets: BTreeMap<String, PathBuf>,
    pub plans: Vec<ExperimentPlan>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            backend: BackendSpec::default(),
            annotator: AnnotatorSpec::default(),
            adaptation: AdaptationConfig::default(),
            selector: SelectorConfig::default(),
            polarity: PolarityOptions::default(),
            labels_from: LabelSource::default(),
            patterns: PatternRegistry::default(),
            finetune: FinetuneConfig::default(),
            seeds: DEFAULT_SEEDS.to_vec(),
            output: PathBuf::from("runs"),
            model_cache: None,
            jobs: 1,
            datasets: BTreeMap::new(),
            plans: Vec::new(),
        }
    }
}

fn list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, T::Err> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

fn path_in(base: &Path, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Applies entries in order on top of the defaults, then validates.
    pub fn from_entries(entries: &[Entry]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut mod_relations: Vec<String> = DEFAULT_MOD_RELATIONS.map(String::from).to_vec();
        let mut custom: BTreeMap<String, (String, String)> = BTreeMap::new();
        let mut plans: BTreeMap<String, PlanDraft> = BTreeMap::new();
        let mut plan_order: Vec<String> = Vec::new();

        for e in entries {
            let bad = |what: &str| Error::Config(format!("{}: {what} `{}` for `{}`", e.origin, e.value, e.key));
            let num = |what: &str| bad(&format!("expected {what}, got"));
            let v = e.value.as_str();
            let (section, rest) = e.key.split_once('.').expect("keys carry a section");
            match (section, rest) {
                ("backend", "kind") => cfg.backend.kind = BackendKind::from_str(v)?,
                ("backend", "model") => {
                    // a directory for the toy backend, a command line for an external one
                    cfg.backend.model = Some(match cfg.backend.kind {
                        BackendKind::Toy => path_in(&e.base, v).display().to_string(),
                        _ => v.to_string(),
                    })
                }
                ("backend", "seed") => cfg.backend.seed = v.parse().map_err(|_| num("an integer"))?,
                ("backend", "max_subtokens") => cfg.backend.max_subtokens = v.parse().map_err(|_| num("an integer"))?,
                ("annotator", "kind") => cfg.annotator.kind = AnnotatorKind::from_str(v)?,
                ("annotator", "path") => cfg.annotator.path = Some(path_in(&e.base, v)),
                ("adapt", key) => {
                    let a = &mut cfg.adaptation;
                    match key {
                        "batch_size" => a.batch_size = v.parse().map_err(|_| num("an integer"))?,
                        "grad_accum_steps" => a.grad_accum_steps = v.parse().map_err(|_| num("an integer"))?,
                        "learning_rate" => a.learning_rate = v.parse().map_err(|_| num("a number"))?,
                        "epochs" => a.epochs = v.parse().map_err(|_| num("an integer"))?,
                        "mask_probability" => a.mask_probability = v.parse().map_err(|_| num("a number"))?,
                        "seed" => a.seed = v.parse().map_err(|_| num("an integer"))?,
                        _ => return Err(unknown(e)),
                    }
                }
                ("select", "layers") => cfg.selector.layers = list(v).map_err(|_| num("layer indices"))?,
                ("select", "aggregation") => cfg.selector.aggregation = v.parse()?,
                ("select", "tie_break") => cfg.selector.tie_break = v.parse()?,
                ("select", "pos_fallback") => {
                    cfg.selector.pos_fallback = v.parse().map_err(|_| num("true or false"))?
                }
                ("polarity", "margin") => {
                    cfg.polarity.margin = match v {
                        "" | "none" | "off" => None,
                        _ => Some(v.parse().map_err(|_| num("a number"))?),
                    }
                }
                ("polarity", "labels_from") => cfg.labels_from = v.parse()?,
                ("patterns", "mod_relations") => mod_relations = list(v).expect("strings parse"),
                ("patterns", name) => {
                    custom.insert(name.to_string(), (v.to_string(), e.origin.clone()));
                }
                ("finetune", key) => {
                    let f = &mut cfg.finetune;
                    match key {
                        "epochs" => f.epochs = v.parse().map_err(|_| num("an integer"))?,
                        "learning_rate" => f.learning_rate = v.parse().map_err(|_| num("a number"))?,
                        "seed" => f.seed = v.parse().map_err(|_| num("an integer"))?,
                        _ => return Err(unknown(e)),
                    }
                }
                ("run", "seeds") => cfg.seeds = list(v).map_err(|_| num("seeds"))?,
                ("run", "output") => cfg.output = path_in(&e.base, v),
                ("run", "model_cache") => cfg.model_cache = Some(path_in(&e.base, v)),
                ("run", "jobs") => cfg.jobs = v.parse().map_err(|_| num("an integer"))?,
                ("dataset", name) => {
                    cfg.datasets.insert(name.to_string(), path_in(&e.base, v));
                }
                ("plan", rest) => {
                    let (id, field) = rest.split_once('.').ok_or_else(|| unknown(e))?;
                    if !plans.contains_key(id) {
                        plan_order.push(id.to_string());
                    }
                    let draft = plans.entry(id.to_string()).or_default();
                    match field {
                        "setting" => draft.setting = Some(v.parse()?),
                        "adaptation" => draft.adaptation = Some(v.parse()?),
                        "train" => draft.train = list(v).map_err(|_| bad("unknown domain in"))?,
                        "test" => draft.test = list(v).expect("strings parse"),
                        "seeds" => draft.seeds = Some(list(v).map_err(|_| num("seeds"))?),
                        "fraction" => draft.fraction = Some(v.parse().map_err(|_| num("a number"))?),
                        "corpus" => draft.corpus = v.split(',').map(|p| path_in(&e.base, p.trim())).collect(),
                        _ => return Err(unknown(e)),
                    }
                }
                _ => return Err(unknown(e)),
            }
        }

        let mut patterns = PatternRegistry::builtin(&mod_relations);
        for (name, (spec, origin)) in custom {
            let p = OpinionRelationPattern::parse(&name, &spec, &mod_relations)
                .map_err(|err| Error::Config(format!("{origin}: {err}")))?;
            patterns.register(p)?;
        }
        cfg.patterns = patterns;
        for id in plan_order {
            let d = plans.remove(&id).expect("draft recorded");
            let setting = d
                .setting
                .ok_or_else(|| Error::Config(format!("plan `{id}` has no setting")))?;
            cfg.plans.push(ExperimentPlan {
                id,
                setting,
                adaptation: d.adaptation.unwrap_or(AdaptationMode::Without),
                train_domains: d.train,
                test_datasets: d.test,
                seeds: d.seeds.unwrap_or_else(|| cfg.seeds.clone()),
                labeled_fraction: d.fraction,
                extra_corpus: d.corpus,
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.selector.layers.is_empty() {
            return Err(Error::Config("select.layers is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("run.seeds is empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("run.seeds repeats a seed".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("run.jobs must be positive".into()));
        }
        if let Some(m) = self.polarity.margin {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::Config("polarity.margin must be a non-negative number".into()));
            }
        }
        if self.annotator.kind == AnnotatorKind::Conllu && self.annotator.path.is_none() {
            return Err(Error::Config("annotator.kind = conllu needs annotator.path".into()));
        }
        self.adaptation.validate()
    }
}

fn unknown(e: &Entry) -> Error {
    Error::Config(format!("{}: unknown key `{}`", e.origin, e.key))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Domain;
    use crate::selector::{AggregationMode, TieBreak};

    fn load(text: &str) -> Result<RunConfig> {
        RunConfig::from_entries(&parse_entries(text, Path::new("/cfg/run.conf"))?)
    }

    #[test]
    fn defaults_match_the_documented_hyperparameters() {
        let c = load("").unwrap();
        assert_eq!(c.adaptation.batch_size, 16);
        assert_eq!(c.adaptation.learning_rate, 5e-5);
        assert_eq!(c.selector.layers, [0, 1, 2, 3]);
        assert_eq!(c.seeds, [1, 2, 3, 4, 5]);
        assert_eq!(c.annotator.kind, AnnotatorKind::Rules);
        assert_eq!(c.patterns.list_patterns().len(), 4);
    }

    #[test]
    fn full_file() {
        let c = load(
            "# demo\n\
             backend.kind = toy\n\
             backend.model = weights\n\
             adapt.batch_size = 8\n\
             select.layers = 0, 2\n\
             select.aggregation = vote\n\
             select.tie_break = highest\n\
             select.pos_fallback = false\n\
             polarity.margin = 0.05\n\
             polarity.labels_from = base\n\
             patterns.P5 = NOUN>nsubj>ADJ => emit=1 head=1\n\
             run.seeds = 7,8\n\
             run.output = out\n\
             dataset.R14 = data/R14.jsonl\n\
             dataset.L14 = /abs/L14.jsonl\n\
             plan.x.setting = cross_domain\n\
             plan.x.adaptation = with\n\
             plan.x.train = laptop\n\
             plan.x.test = R14\n",
        )
        .unwrap();
        assert_eq!(c.backend.model.as_deref(), Some("/cfg/weights"));
        assert_eq!(c.adaptation.batch_size, 8);
        assert_eq!(c.selector.layers, [0, 2]);
        assert_eq!(c.selector.aggregation, AggregationMode::Vote);
        assert_eq!(c.selector.tie_break, TieBreak::Highest);
        assert!(!c.selector.pos_fallback);
        assert_eq!(c.polarity.margin, Some(0.05));
        assert_eq!(c.labels_from, LabelSource::Base);
        assert_eq!(c.patterns.list_patterns().len(), 5);
        assert_eq!(c.output, PathBuf::from("/cfg/out"));
        assert_eq!(c.datasets["R14"], PathBuf::from("/cfg/data/R14.jsonl"));
        assert_eq!(c.datasets["L14"], PathBuf::from("/abs/L14.jsonl"));
        let p = &c.plans[0];
        assert_eq!((p.setting, p.adaptation), (Setting::CrossDomain, AdaptationMode::With));
        assert_eq!(p.train_domains, [Domain::Laptop]);
        assert_eq!(p.seeds, [7, 8]);
    }

    #[test]
    fn overrides_win() {
        let mut entries = parse_entries("run.jobs = 2\n", Path::new("c")).unwrap();
        entries.push(override_entry("run.jobs=6").unwrap());
        assert_eq!(RunConfig::from_entries(&entries).unwrap().jobs, 6);
    }

    #[test]
    fn rejections() {
        for bad in [
            "nokey",
            "loose = 1",
            "select.layers =",
            "run.seeds = 1,1",
            "select.colour = red",
            "adapt.batch_size = many",
            "run.jobs = 1\nrun.jobs = 2",
            "annotator.kind = conllu",
            "plan.x.test = R14",
            "patterns.P9 = ADJ>amod>NOUN => emit=1 head=0",
        ] {
            let err = load(bad).unwrap_err();
            assert_eq!(err.kind(), crate::ErrorKind::Input, "{bad}: {err}");
        }
    }
}
