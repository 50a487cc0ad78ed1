//! The `/v1` HTTP API.
//!
//! | Method | Path | Result |
//! |---|---|---|
//! | POST | `/v1/tables` | multipart CSV upload, `{table_id, columns, rows}` |
//! | GET | `/v1/tables/{id}` | metadata and a preview of the first rows |
//! | POST | `/v1/lakes` | multipart CSV uploads, `{lake_id, tables}` |
//! | GET | `/v1/lakes/{id}` | catalog and index status per mode |
//! | POST | `/v1/lakes/{id}/index` | `{mode}`, 202 while the build runs |
//! | POST | `/v1/jobs` | a cleaning configuration, `{job_id}` |
//! | GET | `/v1/jobs/{id}` | status and progress |
//! | GET | `/v1/jobs/{id}/results` | `{status, partial, results}` |
//! | GET | `/v1/jobs/{id}/results/{row_id}/source` | the lake tuple behind a suggestion |
//! | GET | `/v1/jobs/{id}/export` | cleaned CSV; `accepted` and `apply_repairs` query parameters |
//!
//! In a job body `table` is a table id and `datalake` a lake id. Errors are
//! `{"error": message, "fields": [{field, message}]}` with 404 for unknown
//! ids, 409 for retrieval on an unindexed lake and 422 for invalid input.

use std::sync::{Arc, Mutex};

use axum::extract::multipart::Multipart;
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lakeclean::model::{CleaningConfig, ConfigError, FieldError, IndexerMode, ReasonerMode, RerankerMode, TableId, TupleRef};
use lakeclean::pipeline::{export_cleaned, run_job, JobStatus, Resources};
use lakeclean::reason::{PromptTemplate, RemoteModelClient};
use lakeclean::rerank::CrossScorer;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use crate::remote::{RemoteSettings, ENV_CROSS_URL, ENV_MODEL_URL};
use crate::store::{IndexState, JobRecord, Store, StoreError, StoredLake};

/// Upload size limit per request.
pub const MAX_UPLOAD_BYTES: usize = 256 * 1024 * 1024;
const PREVIEW_ROWS: usize = 20;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub remote: Arc<RemoteSettings>,
    /// Bounds how many jobs execute at once.
    slots: Arc<Semaphore>,
}

impl AppState {
    pub fn new(store: Store, remote: RemoteSettings, workers: usize) -> Self {
        Self {
            store: Arc::new(store),
            remote: Arc::new(remote),
            slots: Arc::new(Semaphore::new(workers.max(1))),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/v1/tables", post(upload_table))
        .route("/v1/tables/{id}", get(get_table))
        .route("/v1/lakes", post(upload_lake))
        .route("/v1/lakes/{id}", get(get_lake))
        .route("/v1/lakes/{id}/index", post(build_index))
        .route("/v1/jobs", post(submit_job))
        .route("/v1/jobs/{id}", get(get_job))
        .route("/v1/jobs/{id}/results", get(get_results))
        .route("/v1/jobs/{id}/results/{row_id}/source", get(get_source))
        .route("/v1/jobs/{id}/export", get(export))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    fields: Vec<FieldError>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            fields: Vec::new(),
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown {what} `{id}`"))
    }

    fn invalid(fields: Vec<FieldError>) -> Self {
        let message = fields
            .iter()
            .map(|f| format!("{}: {}", f.field, f.message))
            .collect::<Vec<_>>()
            .join("; ");
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            message,
            fields,
        }
    }

    fn field(field: &str, message: impl Into<String>) -> Self {
        Self::invalid(vec![FieldError::new(field, message)])
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl From<ConfigError> for ApiError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid(fields) => Self::invalid(fields),
            other => Self::field("relevant_columns", other.to_string()),
        }
    }
}

fn upload_error(field: &str, e: StoreError) -> ApiError {
    match e {
        StoreError::Io { .. } | StoreError::Corrupt { .. } => ApiError::internal(e),
        other => ApiError::field(field, other.to_string()),
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.message, "fields": self.fields}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Every part that carries a file name, as `(file name, bytes)`.
async fn files(mut mp: Multipart) -> ApiResult<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    loop {
        let field = mp
            .next_field()
            .await
            .map_err(|e| ApiError::field("file", format!("malformed multipart body: {e}")))?;
        let Some(field) = field else { break };
        let Some(name) = field.file_name().map(str::to_string) else { continue };
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::field("file", format!("cannot read upload: {e}")))?;
        out.push((name, bytes.to_vec()));
    }
    if out.is_empty() {
        return Err(ApiError::field("file", "no file part in the upload"));
    }
    Ok(out)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)
}

async fn upload_table(State(s): State<AppState>, mp: Multipart) -> ApiResult<impl IntoResponse> {
    let mut parts = files(mp).await?;
    if parts.len() != 1 {
        return Err(ApiError::field("file", format!("expected one table, got {} files", parts.len())));
    }
    let (name, bytes) = parts.remove(0);
    let store = s.store.clone();
    let t = blocking(move || store.put_table(&name, bytes)).await?.map_err(|e| upload_error("file", e))?;
    Ok((
        StatusCode::CREATED,
        Json(json!({"table_id": t.meta.table_id, "name": t.meta.name, "columns": t.meta.columns, "rows": t.meta.rows})),
    ))
}

async fn get_table(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let t = s.store.table(&id).ok_or_else(|| ApiError::not_found("table", &id))?;
    let preview: Vec<Vec<Option<&str>>> = t
        .table
        .tuples
        .iter()
        .take(PREVIEW_ROWS)
        .map(|row| t.meta.columns.iter().map(|c| row.get(c)).collect())
        .collect();
    Ok(Json(json!({
        "table_id": t.meta.table_id,
        "name": t.meta.name,
        "columns": t.meta.columns,
        "rows": t.meta.rows,
        "digest": t.meta.digest,
        "preview": preview,
    })))
}

fn lake_json(l: &StoredLake) -> Value {
    let tables: Vec<Value> = l
        .lake
        .catalog
        .tables
        .iter()
        .map(|(id, e)| json!({"table_id": id, "name": e.name, "columns": e.columns, "rows": e.rows, "digest": e.digest}))
        .collect();
    json!({
        "lake_id": l.id(),
        "digest": l.lake.digest(),
        "tables": tables,
        "tuples": l.lake.len(),
        "warnings": l.lake.warnings,
        "indexes": l.index_states(),
    })
}

async fn upload_lake(State(s): State<AppState>, mp: Multipart) -> ApiResult<impl IntoResponse> {
    let parts = files(mp).await?;
    let store = s.store.clone();
    let l = blocking(move || store.put_lake(parts)).await?.map_err(|e| upload_error("files", e))?;
    Ok((StatusCode::CREATED, Json(lake_json(&l))))
}

async fn get_lake(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let l = s.store.lake(&id).ok_or_else(|| ApiError::not_found("lake", &id))?;
    Ok(Json(lake_json(&l)))
}

#[derive(Deserialize)]
struct IndexRequest {
    #[serde(default)]
    mode: IndexerMode,
}

async fn build_index(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<IndexRequest>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let l = s.store.lake(&id).ok_or_else(|| ApiError::not_found("lake", &id))?;
    let Json(req) = body.map_err(|e| ApiError::field("mode", e.body_text()))?;
    let mode = req.mode;
    // A second request while a build runs reports the running build.
    if l.begin_build(mode) {
        let remote = s.remote.clone();
        let lake = l.clone();
        tokio::task::spawn_blocking(move || {
            let embedder = remote.embedder();
            let built = lakeclean::index::LakeIndex::build(&lake.lake, mode, embedder.as_ref()).map_err(|e| e.to_string());
            lake.finish_build(mode, built);
        });
    }
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({"lake_id": l.id(), "mode": mode, "index": l.index_state(mode)})),
    ))
}

#[derive(Deserialize)]
struct JobRequest {
    #[serde(flatten)]
    config: CleaningConfig,
    #[serde(default)]
    template: Option<PromptTemplate>,
}

async fn submit_job(State(s): State<AppState>, body: Result<Json<JobRequest>, JsonRejection>) -> ApiResult<impl IntoResponse> {
    let Json(req) = body.map_err(|e| ApiError::field("body", e.body_text()))?;
    let config = req.config;
    let template = req.template.unwrap_or_default();

    let table = s
        .store
        .table(&config.table)
        .ok_or_else(|| ApiError::field("table", format!("unknown table `{}`", config.table)))?;
    config.validate(Some(&table.meta.columns))?;
    template.validate()?;
    let mut fields = Vec::new();
    if config.reasoner_mode == ReasonerMode::Remote && s.remote.model.is_none() {
        fields.push(FieldError::new(
            "reasoner_mode",
            format!("the remote reasoner needs {ENV_MODEL_URL} to be set on the service"),
        ));
    }
    if config.uses_retrieval() && config.reranker_mode == RerankerMode::Cross && s.remote.cross_url.is_none() {
        fields.push(FieldError::new(
            "reranker_mode",
            format!("the cross reranker needs {ENV_CROSS_URL} to be set on the service"),
        ));
    }
    let lake = match &config.datalake {
        Some(id) => match s.store.lake(id) {
            Some(l) => Some(l),
            None => {
                fields.push(FieldError::new("datalake", format!("unknown lake `{id}`")));
                None
            }
        },
        None => None,
    };
    if !fields.is_empty() {
        return Err(ApiError::invalid(fields));
    }
    if let Some(l) = &lake {
        let state = l.index_state(config.indexer_mode);
        if state != IndexState::Ready {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("lake `{}` has no ready {} index ({:?})", l.id(), config.indexer_mode.as_str(), state),
            ));
        }
    }

    let rec = s
        .store
        .new_job(table.meta.table_id.clone(), lake.as_ref().map(|l| l.id().to_string()), config, template)
        .map_err(ApiError::internal)?;
    let job_id = rec.lock().unwrap().job_id.clone();
    tokio::spawn(execute(s.clone(), rec));
    Ok((StatusCode::ACCEPTED, Json(json!({"job_id": job_id, "status": JobStatus::Pending}))))
}

/// Runs a job on a blocking thread once a slot frees up.
async fn execute(s: AppState, rec: Arc<Mutex<JobRecord>>) {
    let _permit = s.slots.clone().acquire_owned().await.expect("semaphore is never closed");
    let _ = tokio::task::spawn_blocking(move || run_record(&s, &rec)).await;
}

fn run_record(s: &AppState, rec: &Arc<Mutex<JobRecord>>) {
    let (config, template, table_id, lake_id) = {
        let mut r = rec.lock().unwrap();
        r.job.transition(JobStatus::Running).expect("new jobs are pending");
        (r.job.config.clone(), r.template.clone(), r.table_id.clone(), r.lake_id.clone())
    };
    let _ = s.store.save_job(rec);

    let fail = |message: String| {
        let mut r = rec.lock().unwrap();
        r.job.error = Some(message);
        r.job.transition(JobStatus::Failed).expect("job is running");
    };
    let Some(table) = s.store.table(&table_id) else {
        fail(format!("table `{table_id}` disappeared"));
        let _ = s.store.save_job(rec);
        return;
    };
    let lake = lake_id.as_deref().and_then(|id| s.store.lake(id));
    let index = match lake.as_ref().and_then(|l| l.index(config.indexer_mode)) {
        Some(Ok(i)) => Some(i),
        Some(Err(e)) => {
            fail(e);
            let _ = s.store.save_job(rec);
            return;
        }
        None => None,
    };

    let embedder = s.remote.embedder();
    let client = s.remote.model.as_ref().map(|m| m.client());
    let cross = s.remote.cross_scorer();
    let mut res = Resources::new(embedder.as_ref());
    res.lake = lake.as_ref().map(|l| &l.lake);
    res.index = index.as_deref();
    res.remote = client.as_ref().map(|c| c as &dyn RemoteModelClient);
    res.cross = cross.as_ref().map(|c| c as &dyn CrossScorer);
    res.template = template;

    let progress = |processed: usize, total: usize| {
        let mut r = rec.lock().unwrap();
        r.job.progress.processed = r.job.progress.processed.max(processed);
        r.job.progress.total = total;
    };
    let done = run_job(&config, &table.table, &res, Some(&progress));
    rec.lock().unwrap().job = done;
    let _ = s.store.save_job(rec);
}

fn job(s: &AppState, id: &str) -> ApiResult<Arc<Mutex<JobRecord>>> {
    s.store.job(id).ok_or_else(|| ApiError::not_found("job", id))
}

async fn get_job(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let rec = job(&s, &id)?;
    let r = rec.lock().unwrap();
    Ok(Json(json!({
        "job_id": r.job_id,
        "created_at": r.created_at,
        "table_id": r.table_id,
        "lake_id": r.lake_id,
        "status": r.job.status,
        "progress": r.job.progress,
        "telemetry": r.job.telemetry,
        "warnings": r.job.warnings,
        "error": r.job.error,
        "config": r.job.config,
    })))
}

async fn get_results(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let rec = job(&s, &id)?;
    let r = rec.lock().unwrap();
    // Results are only ever returned whole.
    let results = if r.job.status == JobStatus::Done { r.job.results.clone() } else { Vec::new() };
    Ok(Json(json!({
        "job_id": r.job_id,
        "status": r.job.status,
        "partial": false,
        "error": r.job.error,
        "results": results,
    })))
}

async fn get_source(State(s): State<AppState>, Path((id, row_id)): Path<(String, u64)>) -> ApiResult<Json<Value>> {
    let rec = job(&s, &id)?;
    let (suggestion, lake_id) = {
        let r = rec.lock().unwrap();
        let sug = r.job.results.iter().find(|x| x.row_id == row_id).cloned();
        (sug, r.lake_id.clone())
    };
    let suggestion = suggestion.ok_or_else(|| ApiError::not_found("result row", &row_id.to_string()))?;
    let lineage = suggestion
        .lineage
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("row {row_id} has no source tuple")))?;
    let lake = lake_id
        .and_then(|l| s.store.lake(&l))
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "the job's lake is no longer registered"))?;
    let table_id: &TableId = &lineage.source_table;
    let tuple = lake
        .lake
        .resolve(&TupleRef::new(table_id.clone(), lineage.source_row))
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "source tuple not found in the lake"))?;
    let name = lake.lake.catalog.tables.get(table_id).map(|e| e.name.clone());
    let cells: Vec<Value> = tuple.attrs().iter().map(|(n, v)| json!({"name": n, "value": v})).collect();
    Ok(Json(json!({
        "row_id": row_id,
        "lineage": {"table": table_id, "row": lineage.source_row, "attribute": lineage.source_attribute},
        "table_name": name,
        "value": tuple.get(&lineage.source_attribute),
        "highlight": lineage.source_attribute,
        "tuple": cells,
    })))
}

#[derive(Deserialize)]
struct ExportQuery {
    /// Comma-separated accepted row ids; absent accepts every row.
    accepted: Option<String>,
    #[serde(default)]
    apply_repairs: bool,
}

async fn export(State(s): State<AppState>, Path(id): Path<String>, Query(q): Query<ExportQuery>) -> ApiResult<Response> {
    let rec = job(&s, &id)?;
    let r = rec.lock().unwrap().clone();
    if r.job.status != JobStatus::Done {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("job is {:?}; export needs a finished job", r.job.status).to_lowercase(),
        ));
    }
    let accepted = match q.accepted.as_deref() {
        None => None,
        Some(list) => Some(
            list.split(',')
                .map(str::trim)
                .filter(|x| !x.is_empty())
                .map(|x| x.parse::<u64>().map_err(|_| ApiError::field("accepted", format!("`{x}` is not a row id"))))
                .collect::<ApiResult<Vec<u64>>>()?,
        ),
    };
    let table = s
        .store
        .table(&r.table_id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "the job's table is no longer stored"))?;
    let out = export_cleaned(&table.meta.columns, &table.table.tuples, &r.job.results, accepted.as_deref(), q.apply_repairs)?;
    // Nothing substituted: hand back the upload untouched.
    let body = if out.substituted == 0 { table.bytes.clone() } else { out.csv.into_bytes() };
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8".to_string()),
            (header::HeaderName::from_static("x-substituted-cells"), out.substituted.to_string()),
        ],
        body,
    )
        .into_response())
}
