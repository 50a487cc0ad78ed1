//! Accuracy of suggestions against a ground-truth column.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{normalize_value, RepairSuggestion, Tuple};

#[derive(Debug, Error, PartialEq)]
pub enum EvaluationError {
    #[error("no ground truth for row {0}")]
    MissingTruth(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub row_id: u64,
    pub suggested: Option<String>,
    pub truth: String,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset: String,
    pub tuples: usize,
    /// Unrounded fraction of correct rows; zero for an empty result set.
    pub accuracy: f64,
    pub verdicts: Vec<Verdict>,
}

/// Present values of `column`, keyed by row id.
pub fn truth_column(tuples: &[Tuple], column: &str) -> BTreeMap<u64, String> {
    tuples
        .iter()
        .filter_map(|t| t.get(column).map(|v| (t.row_id, v.to_string())))
        .collect()
}

/// Scores every result against the truth. Comparison trims and case-folds;
/// an absent suggestion is wrong.
pub fn evaluate(dataset: &str, results: &[RepairSuggestion], truth: &BTreeMap<u64, String>) -> Result<EvaluationReport, EvaluationError> {
    let mut verdicts = Vec::with_capacity(results.len());
    for r in results {
        let t = truth.get(&r.row_id).ok_or(EvaluationError::MissingTruth(r.row_id))?;
        let correct = r
            .suggested_value
            .as_deref()
            .is_some_and(|s| normalize_value(s) == normalize_value(t));
        verdicts.push(Verdict {
            row_id: r.row_id,
            suggested: r.suggested_value.clone(),
            truth: t.clone(),
            correct,
        });
    }
    let correct = verdicts.iter().filter(|v| v.correct).count();
    let accuracy = if verdicts.is_empty() {
        0.0
    } else {
        correct as f64 / verdicts.len() as f64
    };
    Ok(EvaluationReport {
        dataset: dataset.to_string(),
        tuples: verdicts.len(),
        accuracy,
        verdicts,
    })
}
