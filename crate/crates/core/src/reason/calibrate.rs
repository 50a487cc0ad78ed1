//! Grid search for the local matcher thresholds.

use serde::{Deserialize, Serialize};

use super::local::{LocalReasoner, LocalReasonerParams, MatchFeatures};
use super::ReasonError;
use crate::embed::Embedder;
use crate::model::Tuple;

/// Step count of the threshold grid; candidates are `i / GRID_STEPS`.
pub const GRID_STEPS: u32 = 20;

#[derive(Debug, Clone)]
pub struct LabeledPair {
    pub query: Tuple,
    pub candidate: Tuple,
    pub dirty: String,
    pub pivots: Vec<String>,
    pub is_match: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub params: LocalReasonerParams,
    pub f1: f64,
}

/// F1 of predictions against labels; zero when nothing is predicted positive.
pub fn f1_score(predicted: &[bool], labels: &[bool]) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &l) in predicted.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    if tp + fp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
}

fn grid() -> impl Iterator<Item = f64> {
    (1..GRID_STEPS).map(|i| f64::from(i) / f64::from(GRID_STEPS))
}

/// Picks the `(θ_match, θ_attr)` grid point with the best F1. Ties go to
/// the larger `θ_match`, then the larger `θ_attr`.
pub fn calibrate(embedder: &dyn Embedder, pairs: &[LabeledPair]) -> Result<Calibration, ReasonError> {
    let positives = pairs.iter().filter(|p| p.is_match).count();
    if positives == 0 || positives == pairs.len() {
        return Err(ReasonError::SingleClass);
    }
    let probe = LocalReasoner::new(embedder, LocalReasonerParams::default());
    let features: Vec<MatchFeatures> = pairs
        .iter()
        .map(|p| probe.features(&p.query, &p.candidate, &p.dirty, &p.pivots))
        .collect::<Result<_, _>>()?;
    let labels: Vec<bool> = pairs.iter().map(|p| p.is_match).collect();

    let mut best: Option<Calibration> = None;
    for tm in grid() {
        for ta in grid() {
            let params = LocalReasonerParams {
                theta_match: tm,
                theta_attr: ta,
            };
            let r = LocalReasoner::new(embedder, params);
            let predicted: Vec<bool> = features.iter().map(|f| r.accepts(*f)).collect();
            let f1 = f1_score(&predicted, &labels);
            // Iteration is ascending, so `>=` lets later (larger) thresholds win ties.
            if best.is_none_or(|b| f1 >= b.f1) {
                best = Some(Calibration { params, f1 });
            }
        }
    }
    Ok(best.expect("grid is non-empty"))
}
