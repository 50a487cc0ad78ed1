//! Deterministic local matcher and extractor.
//!
//! The matcher accepts a candidate when its pivot-aligned serialization is
//! close to the query's and some candidate attribute name is close to the
//! dirty attribute name. The extractor then copies the cell of the closest
//! attribute. Both similarities come from the shared embedder; attribute
//! names also match when one is the initialism of the other (`BT` and
//! `Blood_Type`), since trigram embeddings cannot relate those.

use serde::{Deserialize, Serialize};

use super::{ReasonError, ReasonerDecision};
use crate::embed::Embedder;
use crate::model::{render_fields, Tuple};

pub const DEFAULT_THETA_MATCH: f64 = 0.80;
pub const DEFAULT_THETA_ATTR: f64 = 0.60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalReasonerParams {
    pub theta_match: f64,
    pub theta_attr: f64,
}

impl Default for LocalReasonerParams {
    fn default() -> Self {
        Self {
            theta_match: DEFAULT_THETA_MATCH,
            theta_attr: DEFAULT_THETA_ATTR,
        }
    }
}

impl LocalReasonerParams {
    pub fn new(theta_match: f64, theta_attr: f64) -> Result<Self, String> {
        for (name, v) in [("theta_match", theta_match), ("theta_attr", theta_attr)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(Self {
            theta_match,
            theta_attr,
        })
    }
}

/// Splits an attribute name into lowercase words on separators and
/// lower-to-upper case changes: `BloodType` and `blood_type` both give
/// `["blood", "type"]`.
pub fn name_words(name: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    let mut prev_lower = false;
    for c in name.trim().chars() {
        if !c.is_alphanumeric() {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
            prev_lower = false;
            continue;
        }
        if c.is_uppercase() && prev_lower && !cur.is_empty() {
            words.push(std::mem::take(&mut cur));
        }
        prev_lower = c.is_lowercase() || c.is_numeric();
        cur.extend(c.to_lowercase());
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}

fn is_initialism(short: &[String], long: &[String]) -> bool {
    if long.len() < 2 {
        return false;
    }
    let compact: String = short.concat();
    let initials: String = long.iter().filter_map(|w| w.chars().next()).collect();
    !compact.is_empty() && compact == initials
}

/// Pair features the matcher thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchFeatures {
    /// Cosine between the query pivots and the aligned candidate values.
    pub entity: f64,
    /// Best attribute-name similarity for the dirty attribute.
    pub attr: f64,
}

pub struct LocalReasoner<'a> {
    pub embedder: &'a dyn Embedder,
    pub params: LocalReasonerParams,
}

impl<'a> LocalReasoner<'a> {
    pub fn new(embedder: &'a dyn Embedder, params: LocalReasonerParams) -> Self {
        Self { embedder, params }
    }

    /// Similarity of two attribute names in `[−1, 1]`.
    pub fn name_similarity(&self, a: &str, b: &str) -> Result<f64, ReasonError> {
        let wa = name_words(a);
        let wb = name_words(b);
        if wa == wb {
            return Ok(1.0);
        }
        if is_initialism(&wa, &wb) || is_initialism(&wb, &wa) {
            return Ok(1.0);
        }
        let ea = self.embedder.embed(&wa.join(" "))?;
        let eb = self.embedder.embed(&wb.join(" "))?;
        Ok(ea.cosine(&eb))
    }

    /// Index of the candidate attribute most similar to `name`; earlier
    /// columns win ties.
    pub fn best_attribute(&self, name: &str, candidate: &Tuple) -> Result<Option<(usize, f64)>, ReasonError> {
        let mut best: Option<(usize, f64)> = None;
        for (i, cand) in candidate.names().enumerate() {
            let s = self.name_similarity(name, cand)?;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        Ok(best)
    }

    pub fn features(&self, query: &Tuple, candidate: &Tuple, dirty: &str, pivots: &[String]) -> Result<MatchFeatures, ReasonError> {
        let mut q_fields = Vec::with_capacity(pivots.len());
        let mut c_fields = Vec::with_capacity(pivots.len());
        for p in pivots {
            q_fields.push((p.as_str(), query.get(p).unwrap_or("")));
            let aligned = self
                .best_attribute(p, candidate)?
                .and_then(|(i, _)| candidate.attrs()[i].1.as_deref())
                .unwrap_or("");
            c_fields.push((p.as_str(), aligned));
        }
        let entity = if candidate.is_empty() || pivots.is_empty() {
            0.0
        } else {
            let q = self.embedder.embed(&render_fields(q_fields))?;
            let c = self.embedder.embed(&render_fields(c_fields))?;
            q.cosine(&c)
        };
        let attr = self
            .best_attribute(dirty, candidate)?
            .map_or(f64::NEG_INFINITY, |(_, s)| s);
        Ok(MatchFeatures { entity, attr })
    }

    pub fn accepts(&self, f: MatchFeatures) -> bool {
        f.entity >= self.params.theta_match && f.attr >= self.params.theta_attr
    }

    /// Entity and target-attribute gate.
    pub fn local_match(&self, query: &Tuple, candidate: &Tuple, dirty: &str, pivots: &[String]) -> Result<bool, ReasonError> {
        Ok(self.accepts(self.features(query, candidate, dirty, pivots)?))
    }

    /// Copies the cell under the attribute closest to `dirty`. Returns the
    /// value (absent if the cell is) and the attribute name.
    pub fn local_extract(&self, dirty: &str, candidate: &Tuple) -> Result<(Option<String>, String), ReasonError> {
        let (i, _) = self
            .best_attribute(dirty, candidate)?
            .ok_or(ReasonError::NoAttributes)?;
        let (name, value) = &candidate.attrs()[i];
        Ok((value.clone(), name.clone()))
    }

    pub fn decide(&self, query: &Tuple, candidate: &Tuple, dirty: &str, pivots: &[String]) -> Result<ReasonerDecision, ReasonError> {
        if !self.local_match(query, candidate, dirty, pivots)? {
            return Ok(ReasonerDecision::default());
        }
        let (value, attr) = self.local_extract(dirty, candidate)?;
        Ok(ReasonerDecision {
            matched: true,
            value,
            source_attribute: Some(attr),
            ..ReasonerDecision::default()
        })
    }
}
