//! Job configuration files.
//!
//! One `key = value` assignment per line, `#` starts a comment. Values use a
//! small Python-like literal syntax:
//!
//! ```text
//! table = "patients.csv"
//! dirty_column = "BT"
//! relevant_columns = ['Name', 'Age']   # or ALL
//! value = 'NULL'
//! datalake = "hospital_lake/"
//! is_local_model = True
//! ```
//!
//! Optional keys: `indexer`, `reranker`, `n`, `k`, `repair`. Relative paths
//! resolve against the directory holding the file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use lakeclean::model::{CleaningConfig, Columns, ReasonerMode};
use thiserror::Error;

pub const REQUIRED_KEYS: &[&str] = &["table", "dirty_column", "relevant_columns", "value", "is_local_model"];
pub const OPTIONAL_KEYS: &[&str] = &["datalake", "indexer", "reranker", "n", "k", "repair"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigFileError {
    #[error("line {line}: unknown configuration key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: key `{key}` assigned twice")]
    DuplicateKey { key: String, line: usize },
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    BadValue { key: String, line: usize, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

impl ConfigFileError {
    /// The offending key, where one is known.
    pub fn key(&self) -> Option<&str> {
        match self {
            Self::UnknownKey { key, .. } | Self::DuplicateKey { key, .. } | Self::BadValue { key, .. } => Some(key),
            Self::MissingKey(key) => Some(key),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Literal {
    Str(String),
    Word(String),
    List(Vec<String>),
}

impl Literal {
    fn describe(&self) -> &'static str {
        match self {
            Literal::Str(_) => "a string",
            Literal::Word(_) => "a bare word",
            Literal::List(_) => "a list",
        }
    }
}

/// A parsed configuration with paths resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct JobFile {
    pub config: CleaningConfig,
    pub table_path: PathBuf,
    pub lake_path: Option<PathBuf>,
}

/// Strips a trailing comment, ignoring `#` inside quotes.
fn strip_comment(line: &str) -> &str {
    let mut quote = None;
    for (i, c) in line.char_indices() {
        match (quote, c) {
            (None, '"' | '\'') => quote = Some(c),
            (Some(q), c) if c == q => quote = None,
            (None, '#') => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_quoted(s: &str) -> Option<(String, &str)> {
    let mut chars = s.char_indices();
    let (_, q) = chars.next()?;
    if q != '"' && q != '\'' {
        return None;
    }
    for (i, c) in chars {
        if c == q {
            return Some((s[1..i].to_string(), &s[i + 1..]));
        }
    }
    None
}

fn parse_literal(raw: &str) -> Result<Literal, String> {
    let s = raw.trim();
    if s.is_empty() {
        return Err("missing value".into());
    }
    if s.starts_with('"') || s.starts_with('\'') {
        let (v, rest) = parse_quoted(s).ok_or("unterminated string")?;
        if !rest.trim().is_empty() {
            return Err(format!("unexpected text after string: `{}`", rest.trim()));
        }
        return Ok(Literal::Str(v));
    }
    if let Some(inner) = s.strip_prefix('[') {
        let inner = inner.strip_suffix(']').ok_or("list is missing its closing `]`")?;
        let mut items = Vec::new();
        let mut rest = inner.trim();
        while !rest.is_empty() {
            let (v, after) = parse_quoted(rest).ok_or_else(|| format!("list items must be quoted strings, found `{rest}`"))?;
            items.push(v);
            rest = after.trim_start();
            if let Some(r) = rest.strip_prefix(',') {
                rest = r.trim_start();
            } else if !rest.is_empty() {
                return Err(format!("expected `,` between list items, found `{rest}`"));
            }
        }
        return Ok(Literal::List(items));
    }
    if s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-') {
        return Ok(Literal::Word(s.to_string()));
    }
    Err(format!("cannot parse `{s}`"))
}

fn text(key: &str, line: usize, lit: Literal) -> Result<String, ConfigFileError> {
    match lit {
        Literal::Str(s) | Literal::Word(s) => Ok(s),
        other => Err(ConfigFileError::BadValue {
            key: key.into(),
            line,
            message: format!("expected a string, found {}", other.describe()),
        }),
    }
}

fn boolean(key: &str, line: usize, lit: Literal) -> Result<bool, ConfigFileError> {
    let bad = |m: String| ConfigFileError::BadValue {
        key: key.into(),
        line,
        message: m,
    };
    match &lit {
        Literal::Word(w) | Literal::Str(w) => match w.to_ascii_lowercase().as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(bad(format!("expected True or False, found `{w}`"))),
        },
        other => Err(bad(format!("expected True or False, found {}", other.describe()))),
    }
}

fn integer(key: &str, line: usize, lit: Literal) -> Result<usize, ConfigFileError> {
    let s = text(key, line, lit)?;
    s.parse().map_err(|_| ConfigFileError::BadValue {
        key: key.into(),
        line,
        message: format!("expected a non-negative integer, found `{s}`"),
    })
}

/// Parses configuration text. Paths are returned as written.
pub fn parse(src: &str) -> Result<CleaningConfig, ConfigFileError> {
    let mut config = CleaningConfig::new("", "");
    let mut seen = HashSet::new();
    for (i, raw) in src.lines().enumerate() {
        let line = i + 1;
        let body = strip_comment(raw).trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| ConfigFileError::Syntax {
            line,
            message: format!("expected `key = value`, found `{body}`"),
        })?;
        let key = key.trim();
        if !REQUIRED_KEYS.contains(&key) && !OPTIONAL_KEYS.contains(&key) {
            return Err(ConfigFileError::UnknownKey { key: key.into(), line });
        }
        if !seen.insert(key.to_string()) {
            return Err(ConfigFileError::DuplicateKey { key: key.into(), line });
        }
        let lit = parse_literal(value).map_err(|message| ConfigFileError::BadValue {
            key: key.into(),
            line,
            message,
        })?;
        let bad = |message: String| ConfigFileError::BadValue {
            key: key.into(),
            line,
            message,
        };
        match key {
            "table" => config.table = text(key, line, lit)?,
            "dirty_column" => config.dirty_column = text(key, line, lit)?,
            "relevant_columns" => {
                config.relevant_columns = match lit {
                    Literal::List(v) => Columns::List(v),
                    Literal::Word(w) | Literal::Str(w) if w.eq_ignore_ascii_case("all") => Columns::All,
                    Literal::Word(w) | Literal::Str(w) => return Err(bad(format!("expected ALL or a list, found `{w}`"))),
                }
            }
            "value" => config.dirty_marker = text(key, line, lit)?,
            "datalake" => {
                let s = text(key, line, lit)?;
                config.datalake = (!s.trim().is_empty() && !s.eq_ignore_ascii_case("none")).then_some(s);
            }
            "is_local_model" => {
                config.reasoner_mode = if boolean(key, line, lit)? {
                    ReasonerMode::Local
                } else {
                    ReasonerMode::Remote
                }
            }
            "indexer" => config.indexer_mode = text(key, line, lit)?.parse().map_err(bad)?,
            "reranker" => config.reranker_mode = text(key, line, lit)?.parse().map_err(bad)?,
            "n" => config.n = integer(key, line, lit)?,
            "k" => config.k = integer(key, line, lit)?,
            "repair" => config.repair_mode = boolean(key, line, lit)?,
            _ => unreachable!("key checked above"),
        }
    }
    for key in REQUIRED_KEYS {
        if !seen.contains(*key) {
            return Err(ConfigFileError::MissingKey((*key).into()));
        }
    }
    Ok(config)
}

/// Reads a configuration file and resolves its paths.
pub fn load(path: &Path) -> Result<JobFile, ConfigFileError> {
    let src = std::fs::read_to_string(path).map_err(|e| ConfigFileError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let config = parse(&src)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let table_path = base.join(&config.table);
    let lake_path = config.datalake.as_ref().map(|d| base.join(d));
    Ok(JobFile {
        config,
        table_path,
        lake_path,
    })
}
