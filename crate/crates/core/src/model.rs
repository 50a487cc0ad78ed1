//! Domain types shared by every stage: tuples, job configuration, lineage
//! and repair suggestions, plus the tuple serialization used for indexing
//! and prompting.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Separator placed between `name : value` fields of a serialized tuple.
pub const FIELD_SEPARATOR: &str = " ; ";
/// Separator placed between an attribute name and its value.
pub const VALUE_SEPARATOR: &str = " : ";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("duplicate attribute `{0}`")]
    DuplicateAttribute(String),
    #[error("invalid configuration: {}", format_fields(.0))]
    Invalid(Vec<FieldError>),
}

fn format_fields(fields: &[FieldError]) -> String {
    fields
        .iter()
        .map(|f| format!("{}: {}", f.field, f.message))
        .collect::<Vec<_>>()
        .join("; ")
}

/// A validation failure attached to one configuration field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Canonical form used for every attribute-name comparison.
pub fn attr_key(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Canonical form used when comparing cell values.
pub fn normalize_value(value: &str) -> String {
    value.trim().to_lowercase()
}

/// Opaque identifier of a table inside a lake or an uploaded query table.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TableId(pub String);

impl TableId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Provenance handle of one lake tuple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TupleRef {
    pub table_id: TableId,
    pub row_id: u64,
}

impl TupleRef {
    pub fn new(table_id: TableId, row_id: u64) -> Self {
        Self { table_id, row_id }
    }
}

impl fmt::Display for TupleRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.table_id, self.row_id)
    }
}

/// An ordered attribute-to-value record with table/row identity.
///
/// Attribute order is the source column order and is never rearranged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tuple {
    pub table_id: TableId,
    pub row_id: u64,
    attrs: Vec<(String, Option<String>)>,
}

impl Tuple {
    pub fn new(
        table_id: TableId,
        row_id: u64,
        attrs: Vec<(String, Option<String>)>,
    ) -> Result<Self, ConfigError> {
        let mut seen = HashSet::with_capacity(attrs.len());
        for (name, _) in &attrs {
            if !seen.insert(attr_key(name)) {
                return Err(ConfigError::DuplicateAttribute(name.clone()));
            }
        }
        Ok(Self {
            table_id,
            row_id,
            attrs,
        })
    }

    /// Convenience constructor where every value is present.
    pub fn from_pairs(
        table_id: &str,
        row_id: u64,
        pairs: &[(&str, &str)],
    ) -> Result<Self, ConfigError> {
        Self::new(
            TableId::new(table_id),
            row_id,
            pairs
                .iter()
                .map(|(n, v)| (n.to_string(), Some(v.to_string())))
                .collect(),
        )
    }

    pub fn reference(&self) -> TupleRef {
        TupleRef::new(self.table_id.clone(), self.row_id)
    }

    pub fn attrs(&self) -> &[(String, Option<String>)] {
        &self.attrs
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attrs.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    /// Index of an attribute, compared case-insensitively after trimming.
    pub fn position(&self, name: &str) -> Option<usize> {
        let key = attr_key(name);
        self.attrs.iter().position(|(n, _)| attr_key(n) == key)
    }

    pub fn has(&self, name: &str) -> bool {
        self.position(name).is_some()
    }

    /// Value of an attribute; `None` both for unknown attributes and absent values.
    pub fn get(&self, name: &str) -> Option<&str> {
        self.position(name)
            .and_then(|i| self.attrs[i].1.as_deref())
    }

    /// Returns a copy with one attribute's value replaced.
    pub fn with_value(&self, name: &str, value: Option<String>) -> Result<Self, ConfigError> {
        let i = self
            .position(name)
            .ok_or_else(|| ConfigError::UnknownAttribute(name.to_string()))?;
        let mut out = self.clone();
        out.attrs[i].1 = value;
        Ok(out)
    }
}

/// Either an explicit attribute list or every attribute.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Columns {
    #[default]
    All,
    List(Vec<String>),
}

impl Columns {
    pub fn list<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Columns::List(names.into_iter().map(Into::into).collect())
    }

    pub fn is_all(&self) -> bool {
        matches!(self, Columns::All)
    }
}

impl Serialize for Columns {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Columns::All => s.serialize_str("ALL"),
            Columns::List(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Columns {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            List(Vec<String>),
        }
        match Raw::deserialize(d)? {
            Raw::Word(w) if w.trim().eq_ignore_ascii_case("all") => Ok(Columns::All),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "expected ALL or a list of column names, got `{w}`"
            ))),
            Raw::List(v) => Ok(Columns::List(v)),
        }
    }
}

/// Resolves the pivot attributes of `t` in tuple order.
///
/// `All` means every attribute except the dirty one. Explicit names must
/// exist in the tuple and must not name the dirty attribute.
pub fn resolve_pivots(t: &Tuple, dirty: &str, pivots: &Columns) -> Result<Vec<String>, ConfigError> {
    let dirty_key = attr_key(dirty);
    match pivots {
        Columns::All => Ok(t
            .names()
            .filter(|n| attr_key(n) != dirty_key)
            .map(str::to_string)
            .collect()),
        Columns::List(names) => {
            let mut wanted = HashSet::with_capacity(names.len());
            for name in names {
                if !t.has(name) {
                    return Err(ConfigError::UnknownAttribute(name.clone()));
                }
                let key = attr_key(name);
                if key == dirty_key {
                    return Err(ConfigError::Invalid(vec![FieldError::new(
                        "relevant_columns",
                        format!("`{name}` is the dirty column"),
                    )]));
                }
                wanted.insert(key);
            }
            Ok(t
                .names()
                .filter(|n| wanted.contains(&attr_key(n)))
                .map(str::to_string)
                .collect())
        }
    }
}

fn render_field(out: &mut String, name: &str, value: &str) {
    out.push_str(name);
    out.push_str(VALUE_SEPARATOR);
    out.push_str(value);
}

/// Renders `[p1 : v1 ; p2 : v2 ; dirty : ]` with pivots in tuple order and
/// the dirty attribute last with an empty value slot.
///
/// Values are emitted verbatim; an absent pivot value renders as empty text.
pub fn serialize_tuple(t: &Tuple, dirty: &str, pivots: &Columns) -> Result<String, ConfigError> {
    let dirty_pos = t
        .position(dirty)
        .ok_or_else(|| ConfigError::UnknownAttribute(dirty.to_string()))?;
    let pivots = resolve_pivots(t, dirty, pivots)?;
    let mut out = String::from("[");
    for name in &pivots {
        render_field(&mut out, name, t.get(name).unwrap_or(""));
        out.push_str(FIELD_SEPARATOR);
    }
    out.push_str(&t.attrs[dirty_pos].0);
    out.push_str(VALUE_SEPARATOR);
    out.push(']');
    Ok(out)
}

/// Renders every present attribute as `[a : v ; b : w]`, the form used for
/// lake tuples in indexes and prompts. Absent values are omitted.
pub fn serialize_record(t: &Tuple) -> String {
    render_fields(
        t.attrs
            .iter()
            .filter_map(|(n, v)| v.as_deref().map(|v| (n.as_str(), v))),
    )
}

/// Renders an arbitrary `name : value` sequence in the bracketed form.
pub fn render_fields<'a>(fields: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    let mut out = String::from("[");
    for (i, (name, value)) in fields.into_iter().enumerate() {
        if i > 0 {
            out.push_str(FIELD_SEPARATOR);
        }
        render_field(&mut out, name, value);
    }
    out.push(']');
    out
}

/// True for absent values, blank values, and values equal to the marker
/// (trimmed, case-insensitive).
pub fn is_dirty(value: Option<&str>, marker: &str) -> bool {
    match value {
        None => true,
        Some(v) => {
            let v = v.trim();
            v.is_empty() || v.to_lowercase() == marker.trim().to_lowercase()
        }
    }
}

/// Keeps only the named attributes, preserving tuple order and identity.
pub fn project(t: &Tuple, cols: &Columns) -> Result<Tuple, ConfigError> {
    match cols {
        Columns::All => Ok(t.clone()),
        Columns::List(names) => {
            let mut keys = HashSet::with_capacity(names.len());
            for name in names {
                if !t.has(name) {
                    return Err(ConfigError::UnknownAttribute(name.clone()));
                }
                keys.insert(attr_key(name));
            }
            Ok(Tuple {
                table_id: t.table_id.clone(),
                row_id: t.row_id,
                attrs: t
                    .attrs
                    .iter()
                    .filter(|(n, _)| keys.contains(&attr_key(n)))
                    .cloned()
                    .collect(),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasonerMode {
    Remote,
    #[default]
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexerMode {
    Syntactic,
    #[default]
    Semantic,
}

impl IndexerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            IndexerMode::Syntactic => "syntactic",
            IndexerMode::Semantic => "semantic",
        }
    }
}

impl std::str::FromStr for IndexerMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "syntactic" => Ok(IndexerMode::Syntactic),
            "semantic" => Ok(IndexerMode::Semantic),
            other => Err(format!("unknown indexer `{other}` (expected syntactic or semantic)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RerankerMode {
    #[default]
    Maxsim,
    Cross,
    None,
}

impl std::str::FromStr for RerankerMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "maxsim" => Ok(RerankerMode::Maxsim),
            "cross" => Ok(RerankerMode::Cross),
            "none" => Ok(RerankerMode::None),
            other => Err(format!("unknown reranker `{other}` (expected maxsim, cross or none)")),
        }
    }
}

fn default_marker() -> String {
    "NULL".to_string()
}

fn default_n() -> usize {
    100
}

fn default_k() -> usize {
    5
}

/// Full description of one cleaning job over a single dirty column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningConfig {
    pub table: String,
    pub dirty_column: String,
    #[serde(default)]
    pub relevant_columns: Columns,
    #[serde(default = "default_marker")]
    pub dirty_marker: String,
    #[serde(default)]
    pub datalake: Option<String>,
    #[serde(default)]
    pub reasoner_mode: ReasonerMode,
    #[serde(default)]
    pub indexer_mode: IndexerMode,
    #[serde(default)]
    pub reranker_mode: RerankerMode,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub repair_mode: bool,
}

impl CleaningConfig {
    pub fn new(table: impl Into<String>, dirty_column: impl Into<String>) -> Self {
        Self {
            table: table.into(),
            dirty_column: dirty_column.into(),
            relevant_columns: Columns::All,
            dirty_marker: default_marker(),
            datalake: None,
            reasoner_mode: ReasonerMode::Local,
            indexer_mode: IndexerMode::Semantic,
            reranker_mode: RerankerMode::Maxsim,
            n: default_n(),
            k: default_k(),
            repair_mode: false,
        }
    }

    pub fn uses_retrieval(&self) -> bool {
        self.datalake.is_some()
    }

    /// Checks the configuration invariants; `columns` is the query table
    /// header when known.
    pub fn validate(&self, columns: Option<&[String]>) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        let dirty_key = attr_key(&self.dirty_column);
        if dirty_key.is_empty() {
            errors.push(FieldError::new("dirty_column", "must not be empty"));
        }
        if self.n == 0 {
            errors.push(FieldError::new("n", "must be a positive integer"));
        }
        if self.k == 0 {
            errors.push(FieldError::new("k", "must be a positive integer"));
        }
        if self.k > self.n {
            errors.push(FieldError::new("k", format!("k ({}) must not exceed n ({})", self.k, self.n)));
        }
        if let Columns::List(names) = &self.relevant_columns {
            let mut seen = HashSet::new();
            for name in names {
                let key = attr_key(name);
                if key == dirty_key {
                    errors.push(FieldError::new(
                        "relevant_columns",
                        format!("`{name}` is the dirty column"),
                    ));
                }
                if !seen.insert(key) {
                    errors.push(FieldError::new(
                        "relevant_columns",
                        format!("`{name}` listed twice"),
                    ));
                }
            }
        }
        if self.datalake.is_none() && self.reasoner_mode == ReasonerMode::Local {
            errors.push(FieldError::new(
                "datalake",
                "the local reasoner needs a data lake to retrieve candidates from",
            ));
        }
        if let Some(columns) = columns {
            let known: HashSet<String> = columns.iter().map(|c| attr_key(c)).collect();
            if !dirty_key.is_empty() && !known.contains(&dirty_key) {
                errors.push(FieldError::new(
                    "dirty_column",
                    format!("`{}` is not a column of the table", self.dirty_column),
                ));
            }
            if let Columns::List(names) = &self.relevant_columns {
                for name in names.iter().filter(|n| !known.contains(&attr_key(n))) {
                    errors.push(FieldError::new(
                        "relevant_columns",
                        format!("`{name}` is not a column of the table"),
                    ));
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errors))
        }
    }
}

/// The lake cell a suggested value was taken from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    #[serde(rename = "table")]
    pub source_table: TableId,
    #[serde(rename = "row")]
    pub source_row: u64,
    #[serde(rename = "attribute")]
    pub source_attribute: String,
}

/// One reasoner decision over a retrieved candidate, kept for explainability.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrailEntry {
    pub table: TableId,
    pub row: u64,
    pub matched: bool,
}

/// The outcome for one in-scope row.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairSuggestion {
    pub row_id: u64,
    pub dirty_column: String,
    pub existing_value: Option<String>,
    pub suggested_value: Option<String>,
    pub is_conflict: bool,
    pub lineage: Option<Lineage>,
    /// Set when a remote model answered with a value that is not a cell of
    /// the candidate it was shown.
    #[serde(default)]
    pub model_generated: bool,
    pub trail: Vec<TrailEntry>,
}

impl RepairSuggestion {
    /// Recomputes `is_conflict` from the existing and suggested values.
    pub fn conflict_between(repair_mode: bool, existing: Option<&str>, suggested: Option<&str>) -> bool {
        match (repair_mode, existing, suggested) {
            (true, Some(e), Some(s)) => normalize_value(e) != normalize_value(s),
            _ => false,
        }
    }
}
