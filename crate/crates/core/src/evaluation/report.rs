//! Seed-averaged result tables in Markdown or CSV.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::experiment::{AdaptationMode, MetricRow, Setting};
use super::metrics::Task;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub config_hash: String,
    pub rows: Vec<MetricRow>,
    pub notes: Vec<String>,
}

/// Mean over seeds of one (plan, task, dataset) group.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanRow {
    pub plan: String,
    pub task: Task,
    pub dataset: String,
    pub setting: Setting,
    pub adaptation: AdaptationMode,
    pub label: String,
    pub mean: f64,
    pub seeds: Vec<u64>,
}

impl MetricsReport {
    /// Groups in order of first appearance; the mean is the plain sum over
    /// seeds divided by their count.
    pub fn means(&self) -> Vec<MeanRow> {
        let mut groups: Vec<(MeanRow, f64)> = Vec::new();
        for r in &self.rows {
            let found = groups
                .iter_mut()
                .find(|(g, _)| g.plan == r.plan && g.task == r.task && g.dataset == r.dataset);
            match found {
                Some((g, sum)) => {
                    *sum += r.accuracy;
                    g.seeds.push(r.seed);
                }
                None => groups.push((
                    MeanRow {
                        plan: r.plan.clone(),
                        task: r.task,
                        dataset: r.dataset.clone(),
                        setting: r.setting,
                        adaptation: r.adaptation,
                        label: r.label.clone(),
                        mean: 0.0,
                        seeds: vec![r.seed],
                    },
                    r.accuracy,
                )),
            }
        }
        groups
            .into_iter()
            .map(|(mut g, sum)| {
                g.mean = sum / g.seeds.len() as f64;
                g
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Argument(format!("unknown report format `{other}`"))),
        }
    }
}

fn percent(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn unique<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for x in items {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

pub fn render_report(report: &MetricsReport, format: ReportFormat) -> Result<String> {
    if report.rows.is_empty() {
        return Err(Error::Argument("report has no metric rows".into()));
    }
    let means = report.means();
    Ok(match format {
        ReportFormat::Markdown => markdown(report, &means),
        ReportFormat::Csv => csv_text(&means)?,
    })
}

fn markdown(report: &MetricsReport, means: &[MeanRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Results\n");
    let _ = writeln!(out, "Model `{}`, configuration `{}`.", report.model, report.config_hash);
    let _ = writeln!(out, "Accuracy in percent, averaged over seeds.\n");
    let zero_shot = means.iter().any(|m| m.task != Task::AtscFinetuned);
    let mut footnotes = Vec::new();
    for task in Task::ALL {
        let rows: Vec<&MeanRow> = means.iter().filter(|m| m.task == task).collect();
        if rows.is_empty() {
            if zero_shot && task != Task::AtscFinetuned {
                footnotes.push(format!(
                    "{task}: no instance has the gold annotation this task needs; table omitted."
                ));
            }
            continue;
        }
        let datasets = unique(rows.iter().map(|m| m.dataset.clone()));
        let plans = unique(rows.iter().map(|m| m.plan.clone()));
        let _ = writeln!(out, "## {task}\n");
        let _ = writeln!(out, "| Setting | {} |", datasets.join(" | "));
        let _ = writeln!(out, "|---|{}", "---:|".repeat(datasets.len()));
        for plan in plans {
            let in_plan: Vec<&&MeanRow> = rows.iter().filter(|m| m.plan == plan).collect();
            let first = in_plan[0];
            let mut cells = Vec::new();
            for ds in &datasets {
                cells.push(match in_plan.iter().find(|m| &m.dataset == ds) {
                    Some(m) if m.label != m.dataset => format!("{} ({})", percent(m.mean), m.label),
                    Some(m) => percent(m.mean),
                    None => "n/a".into(),
                });
            }
            let seeds = unique(in_plan.iter().map(|m| m.seeds.len()));
            let n = seeds.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("/");
            let _ = writeln!(
                out,
                "| {} ({}, {} adaptation, n={n}) | {} |",
                plan,
                first.setting,
                first.adaptation,
                cells.join(" | ")
            );
        }
        out.push('\n');
    }
    // cell notes read `cell-id: message`; cells sharing a message share a line
    let mut grouped: Vec<(String, Vec<String>)> = Vec::new();
    for note in &report.notes {
        let (cell, message) = note.split_once(": ").unwrap_or(("", note));
        match grouped.iter_mut().find(|(m, _)| m == message) {
            Some((_, cells)) => cells.push(cell.to_string()),
            None => grouped.push((message.to_string(), vec![cell.to_string()])),
        }
    }
    footnotes.extend(
        grouped
            .into_iter()
            .map(|(message, cells)| format!("{} ({})", message, cells.join(", "))),
    );
    if !footnotes.is_empty() {
        let _ = writeln!(out, "## Notes\n");
        for note in footnotes {
            let _ = writeln!(out, "- {note}");
        }
    }
    out
}

/// One CSV line per (plan, task, dataset) mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub plan: String,
    pub task: Task,
    pub setting: Setting,
    pub adaptation: AdaptationMode,
    pub label: String,
    pub dataset: String,
    pub n_seeds: usize,
    /// Percent, two decimals.
    pub accuracy: String,
    /// The unrounded mean fraction.
    pub mean_raw: f64,
}

fn csv_text(means: &[MeanRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for m in means {
        w.serialize(CsvRow {
            plan: m.plan.clone(),
            task: m.task,
            setting: m.setting,
            adaptation: m.adaptation,
            label: m.label.clone(),
            dataset: m.dataset.clone(),
            n_seeds: m.seeds.len(),
            accuracy: percent(m.mean),
            mean_raw: m.mean,
        })
        .map_err(|e| Error::Consistency(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Consistency(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::Format {
                path: "<csv>".into(),
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}
