//! Command-line front end.
//!
//! Exit status is 0 on success, 1 for configuration and usage errors and 2
//! for runtime failures. Failures print one JSON object to stderr:
//! `{"error": {"kind", "message", ...}}`.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lakeclean::embed::Embedder;
use lakeclean::index::LakeIndex;
use lakeclean::lake::{load_table, Lake};
use lakeclean::model::{attr_key, ConfigError, FieldError, IndexerMode, ReasonerMode, RepairSuggestion, RerankerMode};
use lakeclean::pipeline::{evaluate, export_cleaned, run_job, truth_column, JobStatus, QueryTable, Resources};
use lakeclean::reason::RemoteModelClient;
use lakeclean::rerank::CrossScorer;
use lakeclean::synth::{self, ImputationParams};
use serde_json::{json, Value};

use crate::config::{self, ConfigFileError};
use crate::remote::{RemoteSettings, ENV_CROSS_URL, ENV_MODEL_URL};
use crate::store::{Store, DEFAULT_ROW_CAP};

pub const ENV_STATE_DIR: &str = "LAKECLEAN_STATE_DIR";

#[derive(Debug, Parser)]
#[command(name = "lakeclean", version, about = "Retrieval-based imputation and repair of dirty table cells")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a retrieval index over every CSV file in a directory.
    Index {
        #[arg(long)]
        lake: PathBuf,
        #[arg(long, default_value = "semantic")]
        mode: IndexerMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a cleaning job described by a configuration file.
    Clean(CleanArgs),
    /// Score results against a ground-truth table.
    Evaluate {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        column: String,
        /// Also write the full evaluation report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write a seeded synthetic imputation benchmark to a directory.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        rows: usize,
        #[arg(long, default_value_t = 500)]
        distractors: usize,
        /// Query rows whose lake copy gets a wrong blood type.
        #[arg(long, default_value_t = 0)]
        corrupt: usize,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// State directory; defaults to $LAKECLEAN_STATE_DIR or ./lakeclean-state.
        #[arg(long)]
        state_dir: Option<PathBuf>,
        /// Jobs allowed to run at the same time.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = DEFAULT_ROW_CAP)]
        row_cap: usize,
    },
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Prebuilt index; it must match the configured lake and indexer.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Also write the cleaned table.
    #[arg(long)]
    pub export: Option<PathBuf>,
    /// Let the export overwrite conflicting clean cells (repair mode).
    #[arg(long)]
    pub apply_repairs: bool,
}

/// A failure with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub body: Value,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self::with(1, "config", message.into(), json!({}))
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self::with(2, "runtime", message.into(), json!({}))
    }

    fn with(code: i32, kind: &str, message: String, extra: Value) -> Self {
        let mut error = json!({"kind": kind, "message": message});
        if let (Some(e), Value::Object(x)) = (error.as_object_mut(), extra) {
            e.extend(x);
        }
        Self {
            code,
            body: json!({ "error": error }),
        }
    }

    fn fields(fields: Vec<FieldError>) -> Self {
        let message = ConfigError::Invalid(fields.clone()).to_string();
        Self::with(1, "config", message, json!({ "fields": fields }))
    }
}

impl From<ConfigFileError> for Failure {
    fn from(e: ConfigFileError) -> Self {
        let extra = match e.key() {
            Some(k) => json!({ "key": k }),
            None => json!({}),
        };
        Self::with(1, "config", e.to_string(), extra)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid(f) => Self::fields(f),
            other => Self::config(other.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

/// Parses `args` and runs the command; returns the exit status.
pub fn main_with<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let f = Failure::config(e.render().to_string().trim().to_string());
            eprintln!("{}", f.body);
            return f.code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.body);
            f.code
        }
    }
}

pub fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Index { lake, mode, out } => index(&lake, mode, &out),
        Command::Clean(a) => clean(&a),
        Command::Evaluate {
            results,
            truth,
            column,
            report,
        } => evaluate_cmd(&results, &truth, &column, report.as_deref()),
        Command::Generate {
            out,
            seed,
            rows,
            distractors,
            corrupt,
        } => generate(&out, seed, rows, distractors, corrupt),
        Command::Serve {
            addr,
            state_dir,
            workers,
            row_cap,
        } => serve(addr, state_dir, workers, row_cap),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult {
    std::fs::write(path, bytes).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

fn register(dir: &Path) -> CliResult<Lake> {
    let lake = Lake::register_dir(dir).map_err(|e| Failure::runtime(format!("lake {}: {e}", dir.display())))?;
    for w in &lake.warnings {
        eprintln!("{}", json!({ "warning": w }));
    }
    Ok(lake)
}

fn index(lake_dir: &Path, mode: IndexerMode, out: &Path) -> CliResult {
    let lake = register(lake_dir)?;
    let remote = RemoteSettings::from_env();
    let embedder = remote.embedder();
    let index = LakeIndex::build(&lake, mode, embedder.as_ref()).map_err(|e| Failure::runtime(e.to_string()))?;
    index.persist(out).map_err(|e| Failure::runtime(e.to_string()))?;
    println!(
        "{}",
        json!({"lake_id": lake.catalog.lake_id, "digest": lake.digest(), "mode": mode, "tuples": lake.len(), "out": out})
    );
    Ok(())
}

fn clean(a: &CleanArgs) -> CliResult {
    let file = config::load(&a.config)?;
    let cfg = &file.config;
    let bytes = std::fs::read(&file.table_path)
        .map_err(|e| Failure::config(format!("table {}: {e}", file.table_path.display())))?;
    let name = file
        .table_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| cfg.table.clone());
    let table: QueryTable = load_table(&bytes, &name).map_err(|e| Failure::runtime(e.to_string()))?.into();
    cfg.validate(Some(&table.columns))?;

    let remote = RemoteSettings::from_env();
    let mut missing = Vec::new();
    if cfg.reasoner_mode == ReasonerMode::Remote && remote.model.is_none() {
        missing.push(FieldError::new("is_local_model", format!("False needs {ENV_MODEL_URL} to be set")));
    }
    if cfg.uses_retrieval() && cfg.reranker_mode == RerankerMode::Cross && remote.cross_url.is_none() {
        missing.push(FieldError::new("reranker", format!("cross needs {ENV_CROSS_URL} to be set")));
    }
    if !missing.is_empty() {
        return Err(Failure::fields(missing));
    }

    let embedder = remote.embedder();
    let lake = file.lake_path.as_deref().map(register).transpose()?;
    let index = match (&lake, &a.index) {
        (Some(l), Some(p)) => Some(LakeIndex::load(p, Some(l.digest())).map_err(|e| Failure::runtime(format!("index {}: {e}", p.display())))?),
        (Some(l), None) => Some(build(l, cfg.indexer_mode, embedder.as_ref())?),
        (None, _) => None,
    };
    let client = remote.model.as_ref().map(|m| m.client());
    let cross = remote.cross_scorer();
    let mut res = Resources::new(embedder.as_ref());
    res.lake = lake.as_ref();
    res.index = index.as_ref();
    res.remote = client.as_ref().map(|c| c as &dyn RemoteModelClient);
    res.cross = cross.as_ref().map(|c| c as &dyn CrossScorer);

    let job = run_job(cfg, &table, &res, None);
    for w in &job.warnings {
        eprintln!("{}", json!({ "warning": w }));
    }
    if job.status != JobStatus::Done {
        return Err(Failure::runtime(job.error.unwrap_or_else(|| "job failed".into())));
    }
    write(&a.out, job.results_json())?;
    if let Some(path) = &a.export {
        let out = export_cleaned(&table.columns, &table.tuples, &job.results, None, a.apply_repairs)?;
        if out.substituted == 0 {
            write(path, &bytes)?;
        } else {
            write(path, out.csv)?;
        }
    }
    println!(
        "{}",
        json!({"rows": job.progress.total, "suggested": job.telemetry.extracted, "telemetry": job.telemetry, "out": a.out})
    );
    Ok(())
}

fn build(lake: &Lake, mode: IndexerMode, embedder: &dyn Embedder) -> CliResult<LakeIndex> {
    LakeIndex::build(lake, mode, embedder).map_err(|e| Failure::runtime(e.to_string()))
}

fn evaluate_cmd(results: &Path, truth: &Path, column: &str, report: Option<&Path>) -> CliResult {
    let raw = std::fs::read(results).map_err(|e| Failure::config(format!("results {}: {e}", results.display())))?;
    let value: Value =
        serde_json::from_slice(&raw).map_err(|e| Failure::config(format!("results {}: {e}", results.display())))?;
    // Accept a bare array or the service's results wrapper.
    let list = match value {
        Value::Object(mut o) => o.remove("results").unwrap_or(Value::Null),
        v => v,
    };
    let suggestions: Vec<RepairSuggestion> =
        serde_json::from_value(list).map_err(|e| Failure::config(format!("results {}: {e}", results.display())))?;

    let bytes = std::fs::read(truth).map_err(|e| Failure::config(format!("truth {}: {e}", truth.display())))?;
    let name = truth.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let table = load_table(&bytes, &name).map_err(|e| Failure::config(e.to_string()))?;
    if !table.columns.iter().any(|c| attr_key(c) == attr_key(column)) {
        return Err(Failure::fields(vec![FieldError::new(
            "column",
            format!("`{column}` is not a column of {name}"),
        )]));
    }
    let dataset = truth.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let rep = evaluate(&dataset, &suggestions, &truth_column(&table.tuples, column))
        .map_err(|e| Failure::config(e.to_string()))?;
    if let Some(p) = report {
        write(p, serde_json::to_string_pretty(&rep).expect("report serializes"))?;
    }
    let correct = rep.verdicts.iter().filter(|v| v.correct).count();
    println!("accuracy {:.3} ({correct}/{} tuples)", rep.accuracy, rep.tuples);
    Ok(())
}

fn generate(out: &Path, seed: u64, rows: usize, distractors: usize, corrupt: usize) -> CliResult {
    if corrupt > rows {
        return Err(Failure::fields(vec![FieldError::new("corrupt", "must not exceed rows")]));
    }
    let f = synth::imputation(&ImputationParams {
        seed,
        rows,
        distractors,
        corrupt_lake: corrupt,
        repair_corruptions: None,
    });
    let lake_dir = out.join("lake");
    std::fs::create_dir_all(&lake_dir).map_err(|e| Failure::runtime(format!("{}: {e}", lake_dir.display())))?;
    write(&out.join("patients.csv"), &f.query_csv)?;
    for (name, bytes) in &f.lake_sources {
        write(&lake_dir.join(name), bytes)?;
    }
    let truth_rows: Vec<Vec<String>> = f
        .query
        .tuples
        .iter()
        .map(|t| {
            let mut r: Vec<String> = ["Name", "Age", "City"].iter().map(|c| t.get(c).unwrap_or_default().to_string()).collect();
            r.push(f.truth[&t.row_id].clone());
            r
        })
        .collect();
    write(&out.join("truth.csv"), synth::csv_bytes(&["Name", "Age", "City", "BT"], &truth_rows))?;
    write(
        &out.join("clean.conf"),
        "table = \"patients.csv\"\ndirty_column = \"BT\"\nrelevant_columns = ['Name', 'Age', 'City']\nvalue = 'NULL'\n\
         datalake = \"lake/\"\nis_local_model = True\n",
    )?;
    println!("{}", json!({"out": out, "rows": rows, "lake_tables": f.lake_sources.len(), "seed": seed}));
    Ok(())
}

fn serve(addr: SocketAddr, state_dir: Option<PathBuf>, workers: usize, row_cap: usize) -> CliResult {
    let dir = state_dir
        .or_else(|| std::env::var_os(ENV_STATE_DIR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("lakeclean-state"));
    let store = Store::open(&dir, row_cap).map_err(|e| Failure::runtime(e.to_string()))?;
    let state = crate::api::AppState::new(store, RemoteSettings::from_env(), workers);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::runtime(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::runtime(format!("cannot bind {addr}: {e}")))?;
        eprintln!("{}", json!({"listening": addr.to_string(), "state_dir": dir}));
        axum::serve(listener, crate::api::router(state))
            .await
            .map_err(|e| Failure::runtime(e.to_string()))
    })
}
