//! Writing the cleaned table back out.

use std::collections::HashSet;

use crate::lake::write_table;
use crate::model::{ConfigError, RepairSuggestion, Tuple};

/// A cleaned CSV and how many cells it changed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Export {
    pub csv: String,
    pub substituted: usize,
}

/// Substitutes accepted suggestions into the table.
///
/// `accepted` limits substitution to the listed row ids (`None` accepts every
/// row). Dirty cells always take an accepted suggestion; a clean cell is only
/// overwritten when `apply_repairs` is set and the suggestion is a conflict.
pub fn export_cleaned(
    columns: &[String],
    tuples: &[Tuple],
    results: &[RepairSuggestion],
    accepted: Option<&[u64]>,
    apply_repairs: bool,
) -> Result<Export, ConfigError> {
    let accepted: Option<HashSet<u64>> = accepted.map(|a| a.iter().copied().collect());
    let mut out = tuples.to_vec();
    let mut substituted = 0;
    for s in results {
        let Some(value) = &s.suggested_value else { continue };
        if accepted.as_ref().is_some_and(|a| !a.contains(&s.row_id)) {
            continue;
        }
        if s.existing_value.is_some() && !(apply_repairs && s.is_conflict) {
            continue;
        }
        let Some(t) = out.iter_mut().find(|t| t.row_id == s.row_id) else {
            continue;
        };
        *t = t.with_value(&s.dirty_column, Some(value.clone()))?;
        substituted += 1;
    }
    Ok(Export {
        csv: write_table(columns, &out),
        substituted,
    })
}
