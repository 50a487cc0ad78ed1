//! Row-by-row orchestration of cleaning jobs.
//!
//! Without a lake every in-scope row goes to the remote model on its own.
//! With a lake each row is serialized over its pivots, retrieved against the
//! index, reranked, and paired with every top-k candidate in rank order; the
//! first matching candidate that yields a value supplies the suggestion.

pub mod evaluate;
pub mod export;

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::Embedder;
use crate::index::{IndexError, LakeIndex};
use crate::lake::{Lake, LoadedTable};
use crate::model::{
    is_dirty, resolve_pivots, serialize_tuple, CleaningConfig, Columns, ConfigError, Lineage, ReasonerMode,
    RepairSuggestion, RerankerMode, TrailEntry, Tuple,
};
use crate::reason::{
    LocalReasoner, LocalReasonerParams, PromptTemplate, ReasonError, ReasonerDecision, RemoteError,
    RemoteModelClient, RemoteReasoner,
};
use crate::rerank::{rerank_cross, rerank_maxsim, rerank_none, CrossScorer, RerankError, ScoredCandidate};

pub use evaluate::{evaluate, truth_column, EvaluationError, EvaluationReport, Verdict};
pub use export::{export_cleaned, Export};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }

    /// Allowed moves: pending to running, running to done or failed.
    pub fn can_become(self, next: JobStatus) -> bool {
        matches!(
            (self, next),
            (JobStatus::Pending, JobStatus::Running)
                | (JobStatus::Running, JobStatus::Done)
                | (JobStatus::Running, JobStatus::Failed)
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub processed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Telemetry {
    /// Candidates returned by the index, summed over rows.
    pub retrieved: u64,
    /// Pair decisions that said the candidate is the same entity.
    pub matched: u64,
    /// Rows that received a suggested value.
    pub extracted: u64,
    pub refusals: u64,
    pub remote_calls: u64,
    /// Remote calls that failed after retries.
    pub remote_failures: u64,
}

impl Telemetry {
    fn add(&mut self, o: &Telemetry) {
        self.retrieved += o.retrieved;
        self.matched += o.matched;
        self.extracted += o.extracted;
        self.refusals += o.refusals;
        self.remote_calls += o.remote_calls;
        self.remote_failures += o.remote_failures;
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0} is required for this configuration")]
    Missing(&'static str),
    #[error("index was built for lake {index}, but the lake digest is {lake}")]
    DigestMismatch { index: String, lake: String },
    #[error("index is {found}, configuration asks for {wanted}")]
    IndexMode { wanted: &'static str, found: &'static str },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Rerank(#[from] RerankError),
    #[error(transparent)]
    Reason(ReasonError),
    #[error("remote model unreachable: every call failed ({0})")]
    Unreachable(RemoteError),
    #[error("invalid job transition {from:?} -> {to:?}")]
    Transition { from: JobStatus, to: JobStatus },
}

/// A job and everything it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningJob {
    pub config: CleaningConfig,
    pub status: JobStatus,
    pub progress: Progress,
    pub results: Vec<RepairSuggestion>,
    pub telemetry: Telemetry,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

impl CleaningJob {
    pub fn new(config: CleaningConfig) -> Self {
        Self {
            config,
            status: JobStatus::Pending,
            progress: Progress::default(),
            results: Vec::new(),
            telemetry: Telemetry::default(),
            warnings: Vec::new(),
            error: None,
        }
    }

    pub fn transition(&mut self, next: JobStatus) -> Result<(), PipelineError> {
        if !self.status.can_become(next) {
            return Err(PipelineError::Transition {
                from: self.status,
                to: next,
            });
        }
        self.status = next;
        Ok(())
    }

    /// Result array as JSON, the stable wire form.
    pub fn results_json(&self) -> String {
        serde_json::to_string_pretty(&self.results).expect("suggestions serialize")
    }
}

/// The table being cleaned.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryTable {
    pub name: String,
    pub columns: Vec<String>,
    pub tuples: Vec<Tuple>,
}

impl From<LoadedTable> for QueryTable {
    fn from(t: LoadedTable) -> Self {
        Self {
            name: t.name,
            columns: t.columns,
            tuples: t.tuples,
        }
    }
}

/// External collaborators a job may need; which ones are required depends
/// on the configuration.
pub struct Resources<'a> {
    pub embedder: &'a dyn Embedder,
    pub lake: Option<&'a Lake>,
    pub index: Option<&'a LakeIndex>,
    pub remote: Option<&'a dyn RemoteModelClient>,
    pub cross: Option<&'a dyn CrossScorer>,
    pub template: PromptTemplate,
    pub local_params: LocalReasonerParams,
}

impl<'a> Resources<'a> {
    pub fn new(embedder: &'a dyn Embedder) -> Self {
        Self {
            embedder,
            lake: None,
            index: None,
            remote: None,
            cross: None,
            template: PromptTemplate::default(),
            local_params: LocalReasonerParams::default(),
        }
    }
}

/// Called with (processed, total) as rows finish; may run on worker threads.
pub type ProgressFn<'a> = dyn Fn(usize, usize) + Sync + 'a;

#[derive(Default)]
struct RowOutcome {
    suggestion: RepairSuggestion,
    warning: Option<String>,
    telemetry: Telemetry,
    /// Transport failure of the last failing remote call, if any.
    transport: Option<RemoteError>,
}

enum Reasoner<'a> {
    Local(LocalReasoner<'a>),
    Remote(RemoteReasoner<'a>),
}

struct Retrieval<'a> {
    lake: &'a Lake,
    index: &'a LakeIndex,
}

struct Plan<'a> {
    config: &'a CleaningConfig,
    res: &'a Resources<'a>,
    reasoner: Reasoner<'a>,
    retrieval: Option<Retrieval<'a>>,
}

/// Runs a job to completion. Failures are reported through the job's
/// status and `error` field.
pub fn run_job(config: &CleaningConfig, table: &QueryTable, res: &Resources<'_>, progress: Option<&ProgressFn<'_>>) -> CleaningJob {
    let mut job = CleaningJob::new(config.clone());
    job.transition(JobStatus::Running).expect("fresh job is pending");
    match execute(&mut job, table, res, progress) {
        Ok(()) => job.transition(JobStatus::Done).expect("running job"),
        Err(e) => {
            job.results.clear();
            job.error = Some(e.to_string());
            job.transition(JobStatus::Failed).expect("running job");
        }
    }
    job
}

fn plan<'a>(config: &'a CleaningConfig, res: &'a Resources<'a>) -> Result<Plan<'a>, PipelineError> {
    let reasoner = match config.reasoner_mode {
        ReasonerMode::Local => Reasoner::Local(LocalReasoner::new(res.embedder, res.local_params)),
        ReasonerMode::Remote => {
            let client = res.remote.ok_or(PipelineError::Missing("a remote model client"))?;
            Reasoner::Remote(RemoteReasoner::new(client, res.template.clone()))
        }
    };
    let retrieval = if config.uses_retrieval() {
        let lake = res.lake.ok_or(PipelineError::Missing("a registered lake"))?;
        let index = res.index.ok_or(PipelineError::Missing("an index over the lake"))?;
        if index.lake_digest() != lake.digest() {
            return Err(PipelineError::DigestMismatch {
                index: index.lake_digest().to_string(),
                lake: lake.digest().to_string(),
            });
        }
        if index.mode() != config.indexer_mode {
            return Err(PipelineError::IndexMode {
                wanted: config.indexer_mode.as_str(),
                found: index.mode().as_str(),
            });
        }
        if config.reranker_mode == RerankerMode::Cross && res.cross.is_none() {
            return Err(PipelineError::Missing("a cross scorer"));
        }
        Some(Retrieval { lake, index })
    } else {
        None
    };
    Ok(Plan {
        config,
        res,
        reasoner,
        retrieval,
    })
}

fn execute(job: &mut CleaningJob, table: &QueryTable, res: &Resources<'_>, progress: Option<&ProgressFn<'_>>) -> Result<(), PipelineError> {
    let config = &job.config.clone();
    config.validate(Some(&table.columns))?;
    res.template.validate()?;
    let plan = plan(config, res)?;

    let rows: Vec<&Tuple> = table
        .tuples
        .iter()
        .filter(|t| config.repair_mode || is_dirty(t.get(&config.dirty_column), &config.dirty_marker))
        .collect();
    let total = rows.len();
    let done = AtomicUsize::new(0);

    let outcomes = rows
        .par_iter()
        .map(|t| {
            let out = plan.row(t);
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if let Some(cb) = progress {
                cb(n, total);
            }
            out
        })
        .collect::<Result<Vec<RowOutcome>, PipelineError>>()?;

    let mut telemetry = Telemetry::default();
    let mut last_transport = None;
    let mut warnings = Vec::new();
    let mut results = Vec::with_capacity(total);
    for o in outcomes {
        telemetry.add(&o.telemetry);
        if o.transport.is_some() {
            last_transport = o.transport;
        }
        warnings.extend(o.warning);
        results.push(o.suggestion);
    }
    if telemetry.remote_calls > 0 && telemetry.remote_failures == telemetry.remote_calls {
        return Err(PipelineError::Unreachable(last_transport.unwrap_or(RemoteError::Timeout)));
    }
    job.progress = Progress { processed: total, total };
    job.telemetry = telemetry;
    job.warnings = warnings;
    job.results = results;
    Ok(())
}

impl Plan<'_> {
    fn row(&self, t: &Tuple) -> Result<RowOutcome, PipelineError> {
        let cfg = self.config;
        let existing = t.get(&cfg.dirty_column);
        let existing = (!is_dirty(existing, &cfg.dirty_marker)).then(|| existing.unwrap_or_default().to_string());
        let dirty_name = t
            .position(&cfg.dirty_column)
            .map(|i| t.attrs()[i].0.clone())
            .ok_or_else(|| ConfigError::UnknownAttribute(cfg.dirty_column.clone()))?;
        let pivots = resolve_pivots(t, &cfg.dirty_column, &cfg.relevant_columns)?;

        // Dirty pivot cells carry no information; blank them before use.
        let mut query = t.with_value(&dirty_name, None)?;
        for p in &pivots {
            if is_dirty(t.get(p), &cfg.dirty_marker) {
                query = query.with_value(p, None)?;
            }
        }

        let mut out = RowOutcome {
            suggestion: RepairSuggestion {
                row_id: t.row_id,
                dirty_column: dirty_name.clone(),
                existing_value: existing,
                ..RepairSuggestion::default()
            },
            ..RowOutcome::default()
        };

        match &self.retrieval {
            None => self.standalone(&query, &dirty_name, &pivots, &mut out)?,
            Some(r) => {
                if pivots.iter().all(|p| query.get(p).is_none()) {
                    out.warning = Some(format!("row {}: every pivot value is dirty, nothing to retrieve on", t.row_id));
                } else {
                    self.retrieve(r, &query, &dirty_name, &pivots, &mut out)?;
                }
            }
        }

        let s = &mut out.suggestion;
        s.is_conflict = RepairSuggestion::conflict_between(cfg.repair_mode, s.existing_value.as_deref(), s.suggested_value.as_deref());
        if s.suggested_value.is_some() {
            out.telemetry.extracted += 1;
        }
        Ok(out)
    }

    /// Runs one remote call, folding refusals and transport failures into
    /// telemetry instead of failing the row.
    fn remote_call(
        &self,
        out: &mut RowOutcome,
        call: impl FnOnce() -> Result<ReasonerDecision, ReasonError>,
    ) -> Result<Option<ReasonerDecision>, PipelineError> {
        out.telemetry.remote_calls += 1;
        match call() {
            Ok(d) => {
                if d.refusal {
                    out.telemetry.refusals += 1;
                }
                Ok(Some(d))
            }
            Err(ReasonError::Remote(e)) => {
                out.telemetry.remote_failures += 1;
                out.transport = Some(e);
                Ok(None)
            }
            Err(e) => Err(PipelineError::Reason(e)),
        }
    }

    fn standalone(&self, query: &Tuple, dirty: &str, pivots: &[String], out: &mut RowOutcome) -> Result<(), PipelineError> {
        let Reasoner::Remote(remote) = &self.reasoner else {
            return Err(PipelineError::Missing("a data lake for the local reasoner"));
        };
        if let Some(d) = self.remote_call(out, || remote.decide_standalone(query, dirty, pivots))? {
            out.suggestion.model_generated = d.value.is_some();
            out.suggestion.suggested_value = d.value;
        }
        Ok(())
    }

    fn retrieve(&self, r: &Retrieval<'_>, query: &Tuple, dirty: &str, pivots: &[String], out: &mut RowOutcome) -> Result<(), PipelineError> {
        let cfg = self.config;
        let embedder = self.res.embedder;
        let text = serialize_tuple(query, dirty, &Columns::List(pivots.to_vec()))?;
        let hits: Vec<ScoredCandidate> = r
            .index
            .query(embedder, &text, cfg.n)?
            .into_iter()
            .map(|(reference, score)| ScoredCandidate::retrieved(reference, score))
            .collect();
        out.telemetry.retrieved += hits.len() as u64;

        let top = match cfg.reranker_mode {
            RerankerMode::Maxsim => rerank_maxsim(query, pivots, &hits, r.lake, cfg.k, embedder)?,
            RerankerMode::None => rerank_none(&hits, cfg.k),
            RerankerMode::Cross => {
                let scorer = self.res.cross.ok_or(PipelineError::Missing("a cross scorer"))?;
                rerank_cross(query, dirty, pivots, &hits, r.lake, scorer, cfg.k)?
            }
        };

        // Every top-k pair is decided so the trail is complete; the first
        // match with a value wins.
        for c in &top {
            let candidate = r
                .lake
                .resolve(&c.reference)
                .ok_or_else(|| RerankError::Unresolved(c.reference.clone()))?;
            let decision = match &self.reasoner {
                Reasoner::Local(local) => Some(
                    local
                        .decide(query, candidate, dirty, pivots)
                        .map_err(PipelineError::Reason)?,
                ),
                Reasoner::Remote(remote) => self.remote_call(out, || remote.decide_pair(query, candidate, dirty, pivots))?,
            };
            let decision = decision.unwrap_or_default();
            if decision.matched {
                out.telemetry.matched += 1;
            }
            out.suggestion.trail.push(TrailEntry {
                table: c.reference.table_id.clone(),
                row: c.reference.row_id,
                matched: decision.matched,
            });
            if out.suggestion.suggested_value.is_some() || !decision.matched {
                continue;
            }
            if let Some(value) = decision.value.filter(|v| !is_dirty(Some(v), &cfg.dirty_marker)) {
                match decision.source_attribute {
                    Some(attribute) => {
                        out.suggestion.lineage = Some(Lineage {
                            source_table: c.reference.table_id.clone(),
                            source_row: c.reference.row_id,
                            source_attribute: attribute,
                        })
                    }
                    None => out.suggestion.model_generated = true,
                }
                out.suggestion.suggested_value = Some(value);
            }
        }
        Ok(())
    }
}
