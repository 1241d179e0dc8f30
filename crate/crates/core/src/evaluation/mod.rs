//! Scoring, experiment matrices and result reports.

mod experiment;
mod finetune;
mod metrics;
mod report;

pub use experiment::{
    check_bounds, config_hash, run_experiment, write_atomic, AdaptationMode, CellFailure, ExperimentContext,
    ExperimentOutcome, ExperimentPlan, LabelSource, MetricRow, Setting, DEFAULT_SEEDS,
};
pub use finetune::{
    classifier_input, finetune_atsc, finetune_curve, CurvePoint, FinetuneOutcome, FinetunePrediction, CURVE_FRACTIONS,
};
pub use metrics::{join_with_gold, score, InstanceResult, Scores, Task, TaskScore};
pub use report::{parse_csv, render_report, CsvRow, MeanRow, MetricsReport, ReportFormat};
