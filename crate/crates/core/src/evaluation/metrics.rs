use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Polarity, Split};
use crate::error::{Error, Result};
use crate::pipeline::PredictionRecord;
use crate::selector::Fallback;
use crate::text::{slice_chars, Span};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "AOOE")]
    Aooe,
    #[serde(rename = "ATSC")]
    Atsc,
    #[serde(rename = "AOOSPE")]
    Aoospe,
    /// Supervised sequence-classification ATSC on a labeled fraction.
    #[serde(rename = "ATSC-FT")]
    AtscFinetuned,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Aooe, Task::Atsc, Task::Aoospe, Task::AtscFinetuned];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Aooe => "AOOE",
            Task::Atsc => "ATSC",
            Task::Aoospe => "AOOSPE",
            Task::AtscFinetuned => "ATSC-FT",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Argument(format!("unknown task `{s}`")))
    }
}

/// A prediction next to its gold annotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub sentence_id: String,
    pub aspect_span: Span,
    pub predicted_opinion: String,
    pub predicted_words: Vec<usize>,
    pub gold_opinions: Vec<String>,
    pub predicted_polarity: Polarity,
    pub gold_polarity: Option<Polarity>,
    pub fallback: Fallback,
}

impl InstanceResult {
    /// `None` when the instance has no gold opinion.
    pub fn aooe_correct(&self) -> Option<bool> {
        if self.gold_opinions.is_empty() {
            return None;
        }
        let predicted = self.predicted_opinion.to_lowercase();
        Some(!predicted.is_empty() && self.gold_opinions.iter().any(|g| g.to_lowercase() == predicted))
    }

    /// `None` when the instance has no gold polarity.
    pub fn atsc_correct(&self) -> Option<bool> {
        self.gold_polarity.map(|g| g == self.predicted_polarity)
    }

    /// Defined when both of the above are.
    pub fn aoospe_correct(&self) -> Option<bool> {
        // both `?` must run before `&&` can short-circuit
        let (opinion, polarity) = (self.aooe_correct()?, self.atsc_correct()?);
        Some(opinion && polarity)
    }

    pub fn correct(&self, task: Task) -> Option<bool> {
        match task {
            Task::Aooe => self.aooe_correct(),
            Task::Atsc | Task::AtscFinetuned => self.atsc_correct(),
            Task::Aoospe => self.aoospe_correct(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub accuracy: f64,
    pub n_correct: usize,
    pub n_eligible: usize,
}

/// Accuracies of the three tasks; a task nobody is eligible for is `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub aooe: Option<TaskScore>,
    pub atsc: Option<TaskScore>,
    pub aoospe: Option<TaskScore>,
}

impl Scores {
    pub fn get(&self, task: Task) -> Option<TaskScore> {
        match task {
            Task::Aooe => self.aooe,
            Task::Atsc => self.atsc,
            Task::Aoospe => self.aoospe,
            Task::AtscFinetuned => None,
        }
    }
}

fn task_score(results: &[InstanceResult], task: Task) -> Option<TaskScore> {
    let outcomes: Vec<bool> = results.iter().filter_map(|r| r.correct(task)).collect();
    if outcomes.is_empty() {
        return None;
    }
    let n_correct = outcomes.iter().filter(|&&c| c).count();
    Some(TaskScore {
        accuracy: n_correct as f64 / outcomes.len() as f64,
        n_correct,
        n_eligible: outcomes.len(),
    })
}

pub fn score(results: &[InstanceResult]) -> Result<Scores> {
    if results.is_empty() {
        return Err(Error::Argument("no results to score".into()));
    }
    Ok(Scores {
        aooe: task_score(results, Task::Aooe),
        atsc: task_score(results, Task::Atsc),
        aoospe: task_score(results, Task::Aoospe),
    })
}

/// Joins predictions with the gold annotation of `split`. Every gold
/// instance must have exactly one prediction.
pub fn join_with_gold(dataset: &Dataset, split: Split, records: &[PredictionRecord]) -> Result<Vec<InstanceResult>> {
    let mut by_key: HashMap<(&str, Span), &PredictionRecord> = HashMap::new();
    for r in records {
        if by_key.insert((r.sentence_id.as_str(), r.aspect_span), r).is_some() {
            return Err(Error::Argument(format!(
                "two predictions for aspect {} of sentence {}",
                r.aspect_span, r.sentence_id
            )));
        }
    }
    let gold = dataset.instances_in(split);
    if gold.len() != records.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} gold instances of {}",
            records.len(),
            gold.len(),
            dataset.name
        )));
    }
    gold.into_iter()
        .map(|(s, inst)| {
            let r = by_key.get(&(s.id.as_str(), inst.aspect_span)).ok_or_else(|| {
                Error::Argument(format!(
                    "no prediction for aspect {} of sentence {}",
                    inst.aspect_span, s.id
                ))
            })?;
            Ok(InstanceResult {
                sentence_id: s.id.clone(),
                aspect_span: inst.aspect_span,
                predicted_opinion: r.predicted_opinion.clone(),
                predicted_words: r.opinion_words.clone(),
                gold_opinions: inst
                    .gold_opinions
                    .iter()
                    .map(|&sp| slice_chars(&s.text, sp).unwrap_or_default().to_string())
                    .collect(),
                predicted_polarity: r.polarity,
                gold_polarity: inst.gold_polarity,
                fallback: r.fallback,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn result(pred: &str, gold: &[&str], p: Polarity, g: Option<Polarity>) -> InstanceResult {
        InstanceResult {
            sentence_id: "s".into(),
            aspect_span: Span::new(0, 1),
            predicted_opinion: pred.into(),
            predicted_words: vec![],
            gold_opinions: gold.iter().map(|s| s.to_string()).collect(),
            predicted_polarity: p,
            gold_polarity: g,
            fallback: Fallback::None,
        }
    }

    use Polarity::*;

    #[test]
    fn counting_example() {
        let rs = vec![
            result("great", &["great"], Positive, Some(Positive)),
            result("Slow", &["slow"], Negative, Some(Negative)),
            result("cheap", &["cheap", "tasty"], Neutral, Some(Positive)),
            result("loud", &["quiet"], Neutral, Some(Negative)),
        ];
        let s = score(&rs).unwrap();
        assert_eq!(s.aooe.unwrap().accuracy, 0.75);
        assert_eq!(s.atsc.unwrap().accuracy, 0.5);
        assert_eq!(s.aoospe.unwrap().accuracy, 0.5);
    }

    #[test]
    fn all_correct() {
        let rs = vec![result("good", &["good"], Positive, Some(Positive))];
        let s = score(&rs).unwrap();
        assert_eq!([s.aooe, s.atsc, s.aoospe].map(|t| t.unwrap().accuracy), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn ineligible_task_is_absent() {
        let rs = vec![result("good", &[], Positive, Some(Positive))];
        let s = score(&rs).unwrap();
        assert!(s.aooe.is_none() && s.aoospe.is_none());
        assert_eq!(s.atsc.unwrap().n_eligible, 1);
        assert!(score(&[]).is_err());
    }

    #[test]
    fn empty_prediction_never_matches() {
        assert_eq!(result("", &[""], Positive, None).aooe_correct(), Some(false));
    }

    fn arb_result() -> impl Strategy<Value = InstanceResult> {
        let pol = prop::sample::select(Polarity::ALL.to_vec());
        (
            prop::sample::select(vec!["a", "b", "c"]),
            prop::collection::vec(prop::sample::select(vec!["a", "b", "c"]), 0..3),
            pol.clone(),
            prop::option::of(pol),
        )
            .prop_map(|(p, g, pp, gp)| result(p, &g, pp, gp))
    }

    #[test]
    fn accuracy_bound_needs_shared_eligibility() {
        // The opinion-only instance drags AOOE down without touching AOOSPE.
        let rs = vec![
            result("x", &["y"], Positive, None),
            result("good", &["good"], Positive, Some(Positive)),
        ];
        let s = score(&rs).unwrap();
        assert_eq!(s.aooe.unwrap().accuracy, 0.5);
        assert_eq!(s.aoospe.unwrap().accuracy, 1.0);
        assert!(s.aoospe.unwrap().n_correct <= s.aooe.unwrap().n_correct);
    }

    proptest! {
        #[test]
        fn aoospe_accuracy_bounded_when_fully_annotated(
            rs in prop::collection::vec(
                arb_result().prop_filter("fully annotated", |r| !r.gold_opinions.is_empty() && r.gold_polarity.is_some()),
                1..40,
            )
        ) {
            let s = score(&rs).unwrap();
            let both = s.aoospe.unwrap().accuracy;
            prop_assert!(both <= s.aooe.unwrap().accuracy.min(s.atsc.unwrap().accuracy));
        }

        #[test]
        fn aoospe_bounded_by_both(rs in prop::collection::vec(arb_result(), 1..40)) {
            let s = score(&rs).unwrap();
            if let Some(both) = s.aoospe {
                prop_assert!(both.n_correct <= s.aooe.unwrap().n_correct);
                prop_assert!(both.n_correct <= s.atsc.unwrap().n_correct);
            }
            let eligible_both = rs.iter().filter(|r| !r.gold_opinions.is_empty() && r.gold_polarity.is_some()).count();
            prop_assert_eq!(s.aoospe.map_or(0, |t| t.n_eligible), eligible_both);
        }
    }
}
