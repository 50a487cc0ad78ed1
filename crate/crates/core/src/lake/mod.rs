//! CSV ingestion, the lake catalog, and the versioned index artifact format.

pub mod artifact;
pub mod csv;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{attr_key, TableId, Tuple, TupleRef};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("table `{table}` is empty")]
    Empty { table: String },
    #[error("table `{table}`: header has an empty column name at column {column}")]
    EmptyHeader { table: String, column: usize },
    #[error("table `{table}`: duplicate column `{name}` at column {column}")]
    DuplicateHeader {
        table: String,
        name: String,
        column: usize,
    },
    #[error("table `{table}`: {source}")]
    Malformed {
        table: String,
        #[source]
        source: csv::CsvError,
    },
    #[error("table `{table}`: line {line} has {found} fields but the header has {expected} (column {column} is extra)")]
    TooManyFields {
        table: String,
        line: usize,
        column: usize,
        found: usize,
        expected: usize,
    },
    #[error("no loadable tables in the lake ({} warnings)", .warnings.len())]
    NoTables { warnings: Vec<String> },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl std::error::Error for csv::CsvError {}

/// Hex SHA-256 of raw file bytes.
pub fn content_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A table parsed into tuples, with its identity and content digest.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedTable {
    pub table_id: TableId,
    pub name: String,
    pub columns: Vec<String>,
    pub digest: String,
    pub tuples: Vec<Tuple>,
}

fn file_stem(name: &str) -> &str {
    let base = name.rsplit(['/', '\\']).next().unwrap_or(name);
    match base.rsplit_once('.') {
        Some((stem, ext)) if !stem.is_empty() && ext.eq_ignore_ascii_case("csv") => stem,
        _ => base,
    }
}

/// Derives the table identifier: lowercased file stem plus the first eight
/// hex digits of the content digest.
pub fn table_id_for(name: &str, digest: &str) -> TableId {
    TableId::new(format!("{}-{}", file_stem(name).trim().to_lowercase(), &digest[..8]))
}

/// Parses a CSV byte stream into one tuple per data row.
///
/// Rows shorter than the header get absent trailing values; longer rows
/// are rejected.
pub fn load_table(bytes: &[u8], name: &str) -> Result<LoadedTable, IngestError> {
    let table = name.to_string();
    let records = csv::parse(bytes).map_err(|source| IngestError::Malformed {
        table: table.clone(),
        source,
    })?;
    let mut records = records.into_iter();
    let header = records.next().ok_or_else(|| IngestError::Empty { table: table.clone() })?;

    let mut seen = HashSet::new();
    let mut columns = Vec::with_capacity(header.fields.len());
    for (i, raw) in header.fields.into_iter().enumerate() {
        let trimmed = raw.trim().to_string();
        if trimmed.is_empty() {
            return Err(IngestError::EmptyHeader {
                table,
                column: i + 1,
            });
        }
        if !seen.insert(attr_key(&trimmed)) {
            return Err(IngestError::DuplicateHeader {
                table,
                name: trimmed,
                column: i + 1,
            });
        }
        columns.push(trimmed);
    }

    let digest = content_digest(bytes);
    let table_id = table_id_for(name, &digest);
    let mut tuples = Vec::new();
    for (row_id, record) in records.enumerate() {
        if record.fields.len() > columns.len() {
            return Err(IngestError::TooManyFields {
                table,
                line: record.line,
                column: columns.len() + 1,
                found: record.fields.len(),
                expected: columns.len(),
            });
        }
        let mut values = record.fields.into_iter();
        let attrs = columns
            .iter()
            .map(|c| (c.clone(), values.next()))
            .collect();
        // Header uniqueness was checked above, so construction cannot fail.
        let tuple = Tuple::new(table_id.clone(), row_id as u64, attrs)
            .expect("header names are unique");
        tuples.push(tuple);
    }

    Ok(LoadedTable {
        table_id,
        name: name.to_string(),
        columns,
        digest,
        tuples,
    })
}

/// Writes tuples back out in the ingestion dialect. Trailing absent values
/// are dropped from each row, mirroring how short rows are read.
pub fn write_table(columns: &[String], tuples: &[Tuple]) -> String {
    let mut out = String::new();
    csv::write_record(&mut out, columns);
    for t in tuples {
        let values: Vec<Option<&str>> = t.attrs().iter().map(|(_, v)| v.as_deref()).collect();
        let keep = values.iter().rposition(Option::is_some).map_or(0, |i| i + 1);
        let fields: Vec<&str> = values[..keep].iter().map(|v| v.unwrap_or("")).collect();
        if fields.is_empty() && !columns.is_empty() {
            // A row of only absent values still needs to occupy a line.
            out.push_str(&",".repeat(columns.len().saturating_sub(1)));
            out.push('\n');
        } else {
            csv::write_record(&mut out, &fields);
        }
    }
    out
}

/// Catalog entry of one registered table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: usize,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LakeCatalog {
    pub lake_id: String,
    /// Order-independent digest over the member table digests.
    pub digest: String,
    pub tables: BTreeMap<TableId, TableEntry>,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

impl LakeCatalog {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }
}

fn lake_digest<'a>(table_digests: impl Iterator<Item = &'a str>) -> String {
    let mut sorted: Vec<&str> = table_digests.collect();
    sorted.sort_unstable();
    let mut h = Sha256::new();
    for d in sorted {
        h.update(d.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// A registered lake: catalog plus the loaded tuples of every table.
#[derive(Debug, Clone)]
pub struct Lake {
    pub catalog: LakeCatalog,
    tables: BTreeMap<TableId, Vec<Tuple>>,
    pub warnings: Vec<String>,
}

impl Lake {
    /// Registers tables from in-memory `(file name, bytes)` sources. Bad
    /// sources become warnings; at least one table must load.
    pub fn register(sources: Vec<(String, Vec<u8>)>) -> Result<Self, IngestError> {
        let loaded: Vec<_> = sources
            .par_iter()
            .map(|(name, bytes)| (name, load_table(bytes, name)))
            .collect();

        let mut warnings = Vec::new();
        let mut tables = BTreeMap::new();
        let mut entries = BTreeMap::new();
        for (name, result) in loaded {
            match result {
                Ok(t) => {
                    if entries.contains_key(&t.table_id) {
                        warnings.push(format!("{name}: duplicate of table {}, skipped", t.table_id));
                        continue;
                    }
                    entries.insert(
                        t.table_id.clone(),
                        TableEntry {
                            name: t.name,
                            columns: t.columns,
                            rows: t.tuples.len(),
                            digest: t.digest,
                        },
                    );
                    tables.insert(t.table_id, t.tuples);
                }
                Err(e) => warnings.push(format!("{name}: {e}")),
            }
        }
        if tables.is_empty() {
            return Err(IngestError::NoTables { warnings });
        }
        let digest = lake_digest(entries.values().map(|e| e.digest.as_str()));
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Ok(Self {
            catalog: LakeCatalog {
                lake_id: format!("lake-{}", &digest[..12]),
                digest,
                tables: entries,
                created_at,
            },
            tables,
            warnings,
        })
    }

    /// Registers every `*.csv` file directly inside `dir`.
    pub fn register_dir(dir: &Path) -> Result<Self, IngestError> {
        let io = |source| IngestError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut sources = Vec::new();
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
            })
            .collect();
        paths.sort();
        for path in paths {
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let bytes = std::fs::read(&path).map_err(|source| IngestError::Io {
                path: path.display().to_string(),
                source,
            })?;
            sources.push((name, bytes));
        }
        Self::register(sources)
    }

    pub fn digest(&self) -> &str {
        &self.catalog.digest
    }

    pub fn resolve(&self, r: &TupleRef) -> Option<&Tuple> {
        self.tables
            .get(&r.table_id)
            .and_then(|rows| rows.get(r.row_id as usize))
    }

    pub fn table(&self, id: &TableId) -> Option<&[Tuple]> {
        self.tables.get(id).map(Vec::as_slice)
    }

    /// Every tuple in canonical `(table_id, row_id)` order.
    pub fn tuples(&self) -> impl Iterator<Item = &Tuple> {
        self.tables.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.tables.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
