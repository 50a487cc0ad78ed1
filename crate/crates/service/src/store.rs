//! On-disk service state: uploaded tables, lakes with their index
//! artifacts, and job records.
//!
//! Layout under the state directory:
//!
//! ```text
//! tables/<table_id>/meta.json   data.csv
//! lakes/<lake_id>/catalog.json  files/<name>.csv  <mode>.idx
//! jobs/<job_id>.json
//! ```
//!
//! Everything is reloaded at startup. Jobs that were still pending or
//! running when the process stopped come back failed.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use lakeclean::index::LakeIndex;
use lakeclean::lake::{load_table, IngestError, Lake};
use lakeclean::model::{CleaningConfig, IndexerMode};
use lakeclean::pipeline::{CleaningJob, JobStatus, QueryTable};
use lakeclean::reason::PromptTemplate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_ROW_CAP: usize = 100_000;
pub const MODES: [IndexerMode; 2] = [IndexerMode::Syntactic, IndexerMode::Semantic];

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt state file {path}: {message}")]
    Corrupt { path: String, message: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{found} rows exceed the row cap of {cap}")]
    RowCap { found: usize, cap: usize },
    #[error("invalid file name `{0}`")]
    FileName(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    let text = serde_json::to_vec_pretty(value).expect("state serializes");
    std::fs::write(&tmp, text).map_err(io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let bytes = std::fs::read(path).map_err(io(path))?;
    serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableMeta {
    pub table_id: String,
    pub name: String,
    pub columns: Vec<String>,
    pub rows: usize,
    pub digest: String,
    pub created_at: u64,
}

/// An uploaded query table. `bytes` is the upload exactly as received.
#[derive(Debug)]
pub struct StoredTable {
    pub meta: TableMeta,
    pub bytes: Vec<u8>,
    pub table: QueryTable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum IndexState {
    None,
    Building,
    Ready,
    Failed { error: String },
}

#[derive(Debug)]
pub struct StoredLake {
    pub lake: Lake,
    dir: PathBuf,
    states: Mutex<BTreeMap<&'static str, IndexState>>,
    loaded: Mutex<HashMap<&'static str, Arc<LakeIndex>>>,
}

impl StoredLake {
    pub fn id(&self) -> &str {
        &self.lake.catalog.lake_id
    }

    pub fn index_path(&self, mode: IndexerMode) -> PathBuf {
        self.dir.join(format!("{}.idx", mode.as_str()))
    }

    pub fn index_state(&self, mode: IndexerMode) -> IndexState {
        self.states.lock().unwrap().get(mode.as_str()).cloned().unwrap_or(IndexState::None)
    }

    pub fn index_states(&self) -> BTreeMap<&'static str, IndexState> {
        MODES.iter().map(|m| (m.as_str(), self.index_state(*m))).collect()
    }

    /// Marks a build as started; false when one is already running.
    pub fn begin_build(&self, mode: IndexerMode) -> bool {
        let mut s = self.states.lock().unwrap();
        if s.get(mode.as_str()) == Some(&IndexState::Building) {
            return false;
        }
        s.insert(mode.as_str(), IndexState::Building);
        true
    }

    /// Stores a finished build, or its failure.
    pub fn finish_build(&self, mode: IndexerMode, built: Result<LakeIndex, String>) {
        let state = match built.and_then(|index| {
            index.persist(&self.index_path(mode)).map_err(|e| e.to_string())?;
            Ok(index)
        }) {
            Ok(index) => {
                self.loaded.lock().unwrap().insert(mode.as_str(), Arc::new(index));
                IndexState::Ready
            }
            Err(error) => IndexState::Failed { error },
        };
        self.states.lock().unwrap().insert(mode.as_str(), state);
    }

    /// The ready index for `mode`, loading the artifact on first use.
    pub fn index(&self, mode: IndexerMode) -> Option<Result<Arc<LakeIndex>, String>> {
        if self.index_state(mode) != IndexState::Ready {
            return None;
        }
        if let Some(i) = self.loaded.lock().unwrap().get(mode.as_str()) {
            return Some(Ok(i.clone()));
        }
        let loaded = LakeIndex::load(&self.index_path(mode), Some(self.lake.digest())).map_err(|e| e.to_string());
        if let Ok(i) = &loaded {
            self.loaded.lock().unwrap().insert(mode.as_str(), Arc::new(i.clone()));
        }
        Some(loaded.map(Arc::new))
    }
}

/// A submitted job and its latest snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub created_at: u64,
    pub table_id: String,
    pub lake_id: Option<String>,
    pub template: PromptTemplate,
    pub job: CleaningJob,
}

pub struct Store {
    root: PathBuf,
    pub row_cap: usize,
    tables: RwLock<HashMap<String, Arc<StoredTable>>>,
    lakes: RwLock<HashMap<String, Arc<StoredLake>>>,
    jobs: RwLock<HashMap<String, Arc<Mutex<JobRecord>>>>,
    /// Serializes writes of each job's file.
    job_files: Mutex<()>,
}

fn safe_name(name: &str) -> Result<String, StoreError> {
    let base = name.rsplit(['/', '\\']).next().unwrap_or_default().trim();
    if base.is_empty() || base == "." || base == ".." {
        return Err(StoreError::FileName(name.to_string()));
    }
    Ok(base.to_string())
}

impl Store {
    /// Opens (creating if needed) a state directory and reloads its contents.
    pub fn open(root: impl Into<PathBuf>, row_cap: usize) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["tables", "lakes", "jobs"] {
            let p = root.join(sub);
            std::fs::create_dir_all(&p).map_err(io(&p))?;
        }
        let store = Self {
            root,
            row_cap,
            tables: RwLock::default(),
            lakes: RwLock::default(),
            jobs: RwLock::default(),
            job_files: Mutex::new(()),
        };
        store.reload()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn subdirs(&self, sub: &str) -> Result<Vec<PathBuf>, StoreError> {
        let dir = self.root.join(sub);
        let mut out: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(io(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        out.sort();
        Ok(out)
    }

    fn reload(&self) -> Result<(), StoreError> {
        for dir in self.subdirs("tables")? {
            let meta: TableMeta = read_json(&dir.join("meta.json"))?;
            let data = dir.join("data.csv");
            let bytes = std::fs::read(&data).map_err(io(&data))?;
            let table = load_table(&bytes, &meta.name)?.into();
            self.tables
                .write()
                .unwrap()
                .insert(meta.table_id.clone(), Arc::new(StoredTable { meta, bytes, table }));
        }
        for dir in self.subdirs("lakes")? {
            let lake = Lake::register_dir(&dir.join("files"))?;
            let stored = self.lake_entry(lake, dir);
            for mode in MODES {
                if stored.index_path(mode).is_file() {
                    stored.states.lock().unwrap().insert(mode.as_str(), IndexState::Ready);
                }
            }
            self.lakes.write().unwrap().insert(stored.id().to_string(), Arc::new(stored));
        }
        for path in self.subdirs("jobs")? {
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let mut rec: JobRecord = read_json(&path)?;
            if !rec.job.status.is_terminal() {
                if rec.job.status == JobStatus::Pending {
                    rec.job.status = JobStatus::Running;
                }
                rec.job.error = Some("service stopped before the job finished".into());
                rec.job.status = JobStatus::Failed;
                write_json(&path, &rec)?;
            }
            self.jobs.write().unwrap().insert(rec.job_id.clone(), Arc::new(Mutex::new(rec)));
        }
        Ok(())
    }

    fn lake_entry(&self, lake: Lake, dir: PathBuf) -> StoredLake {
        StoredLake {
            lake,
            dir,
            states: Mutex::default(),
            loaded: Mutex::default(),
        }
    }

    fn check_cap(&self, rows: usize) -> Result<(), StoreError> {
        if rows > self.row_cap {
            return Err(StoreError::RowCap {
                found: rows,
                cap: self.row_cap,
            });
        }
        Ok(())
    }

    pub fn put_table(&self, name: &str, bytes: Vec<u8>) -> Result<Arc<StoredTable>, StoreError> {
        let name = safe_name(name)?;
        let loaded = load_table(&bytes, &name)?;
        self.check_cap(loaded.tuples.len())?;
        let meta = TableMeta {
            table_id: loaded.table_id.to_string(),
            name,
            columns: loaded.columns.clone(),
            rows: loaded.tuples.len(),
            digest: loaded.digest.clone(),
            created_at: now(),
        };
        let dir = self.root.join("tables").join(&meta.table_id);
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
        let data = dir.join("data.csv");
        std::fs::write(&data, &bytes).map_err(io(&data))?;
        write_json(&dir.join("meta.json"), &meta)?;
        let stored = Arc::new(StoredTable {
            meta,
            bytes,
            table: loaded.into(),
        });
        self.tables.write().unwrap().insert(stored.meta.table_id.clone(), stored.clone());
        Ok(stored)
    }

    pub fn table(&self, id: &str) -> Option<Arc<StoredTable>> {
        self.tables.read().unwrap().get(id).cloned()
    }

    /// Registers a lake from uploaded files. Uploading the same contents
    /// again returns the existing lake.
    pub fn put_lake(&self, files: Vec<(String, Vec<u8>)>) -> Result<Arc<StoredLake>, StoreError> {
        let files = files
            .into_iter()
            .map(|(n, b)| Ok((safe_name(&n)?, b)))
            .collect::<Result<Vec<_>, StoreError>>()?;
        let mut names = std::collections::HashSet::new();
        if let Some((dup, _)) = files.iter().find(|(n, _)| !names.insert(n.to_lowercase())) {
            return Err(StoreError::FileName(format!("{dup} (uploaded twice)")));
        }
        let lake = Lake::register(files.clone())?;
        self.check_cap(lake.len())?;
        if let Some(existing) = self.lake(&lake.catalog.lake_id) {
            return Ok(existing);
        }
        let dir = self.root.join("lakes").join(&lake.catalog.lake_id);
        let files_dir = dir.join("files");
        std::fs::create_dir_all(&files_dir).map_err(io(&files_dir))?;
        for (name, bytes) in &files {
            let p = files_dir.join(name);
            std::fs::write(&p, bytes).map_err(io(&p))?;
        }
        std::fs::write(dir.join("catalog.json"), lake.catalog.to_json()).map_err(io(&dir))?;
        let stored = Arc::new(self.lake_entry(lake, dir));
        self.lakes.write().unwrap().insert(stored.id().to_string(), stored.clone());
        Ok(stored)
    }

    pub fn lake(&self, id: &str) -> Option<Arc<StoredLake>> {
        self.lakes.read().unwrap().get(id).cloned()
    }

    pub fn new_job(
        &self,
        table_id: String,
        lake_id: Option<String>,
        config: CleaningConfig,
        template: PromptTemplate,
    ) -> Result<Arc<Mutex<JobRecord>>, StoreError> {
        let rec = JobRecord {
            job_id: uuid::Uuid::new_v4().to_string(),
            created_at: now(),
            table_id,
            lake_id,
            template,
            job: CleaningJob::new(config),
        };
        let id = rec.job_id.clone();
        let rec = Arc::new(Mutex::new(rec));
        self.save_job(&rec)?;
        self.jobs.write().unwrap().insert(id, rec.clone());
        Ok(rec)
    }

    pub fn job(&self, id: &str) -> Option<Arc<Mutex<JobRecord>>> {
        self.jobs.read().unwrap().get(id).cloned()
    }

    /// Writes the current snapshot of a job to disk.
    pub fn save_job(&self, rec: &Mutex<JobRecord>) -> Result<(), StoreError> {
        let _guard = self.job_files.lock().unwrap();
        let snapshot = rec.lock().unwrap().clone();
        write_json(&self.root.join("jobs").join(format!("{}.json", snapshot.job_id)), &snapshot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lakeclean::embed::HashEmbedder;

    const CSV: &[u8] = b"Name,BT\nAva,NULL\nBo,A\n";

    #[test]
    fn tables_and_lakes_survive_a_restart() {
        let dir = tempfile::tempdir().unwrap();
        let (table_id, lake_id, job_id) = {
            let s = Store::open(dir.path(), DEFAULT_ROW_CAP).unwrap();
            let t = s.put_table("q.csv", CSV.to_vec()).unwrap();
            let l = s.put_lake(vec![("h.csv".into(), b"Name,Blood_Type\nAva,B\n".to_vec())]).unwrap();
            assert!(l.begin_build(IndexerMode::Syntactic));
            assert!(!l.begin_build(IndexerMode::Syntactic));
            l.finish_build(
                IndexerMode::Syntactic,
                LakeIndex::build(&l.lake, IndexerMode::Syntactic, &HashEmbedder::default()).map_err(|e| e.to_string()),
            );
            let j = s
                .new_job(t.meta.table_id.clone(), None, CleaningConfig::new("q", "BT"), PromptTemplate::default())
                .unwrap();
            let id = j.lock().unwrap().job_id.clone();
            (t.meta.table_id.clone(), l.id().to_string(), id)
        };
        let s = Store::open(dir.path(), DEFAULT_ROW_CAP).unwrap();
        assert_eq!(s.table(&table_id).unwrap().bytes, CSV);
        let l = s.lake(&lake_id).unwrap();
        assert_eq!(l.index_state(IndexerMode::Syntactic), IndexState::Ready);
        assert_eq!(l.index_state(IndexerMode::Semantic), IndexState::None);
        assert!(l.index(IndexerMode::Syntactic).unwrap().is_ok());
        let j = s.job(&job_id).unwrap();
        assert_eq!(j.lock().unwrap().job.status, JobStatus::Failed);
    }

    #[test]
    fn row_cap_and_file_names() {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::open(dir.path(), 1).unwrap();
        assert!(matches!(s.put_table("q.csv", CSV.to_vec()), Err(StoreError::RowCap { found: 2, cap: 1 })));
        assert!(matches!(s.put_table("../", CSV.to_vec()), Err(StoreError::FileName(_))));
        assert_eq!(safe_name("a/b/c.csv").unwrap(), "c.csv");
    }
}
