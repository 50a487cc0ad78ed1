#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Mutex;

use lakeclean::embed::HashEmbedder;
use lakeclean::index::LakeIndex;
use lakeclean::lake::{load_table, Lake};
use lakeclean::model::{CleaningConfig, IndexerMode};
use lakeclean::pipeline::{run_job, CleaningJob, QueryTable, Resources};
use lakeclean::reason::{RemoteError, RemoteModelClient};
use lakeclean::synth::csv_bytes;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/health")
}

pub fn golden(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

pub fn health_lake() -> Lake {
    Lake::register_dir(&fixture_dir().join("hospital_lake")).unwrap()
}

pub fn patients() -> QueryTable {
    let bytes = std::fs::read(fixture_dir().join("patients.csv")).unwrap();
    load_table(&bytes, "patients.csv").unwrap().into()
}

pub fn table_from_rows(name: &str, header: &[&str], rows: &[&[&str]]) -> QueryTable {
    let rows: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect();
    load_table(&csv_bytes(header, &rows), name).unwrap().into()
}

pub fn lake_from_rows(name: &str, header: &[&str], rows: &[&[&str]]) -> Lake {
    let rows: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect();
    Lake::register(vec![(name.to_string(), csv_bytes(header, &rows))]).unwrap()
}

pub fn bt_config() -> CleaningConfig {
    let mut c = CleaningConfig::new("patients", "BT");
    c.datalake = Some("hospital_lake".into());
    c
}

/// Runs a local-reasoner job against `lake`, building the index the
/// config asks for.
pub fn run_local(config: &CleaningConfig, table: &QueryTable, lake: &Lake) -> CleaningJob {
    let e = HashEmbedder::default();
    let index = LakeIndex::build(lake, config.indexer_mode, &e).unwrap();
    let mut res = Resources::new(&e);
    res.lake = Some(lake);
    res.index = Some(&index);
    run_job(config, table, &res, None)
}

pub fn index_for(lake: &Lake, mode: IndexerMode) -> LakeIndex {
    LakeIndex::build(lake, mode, &HashEmbedder::default()).unwrap()
}

type Script = Box<dyn Fn(&str) -> Result<String, RemoteError> + Send + Sync>;

/// Mock remote model answering from a closure and logging every prompt.
pub struct ScriptedClient {
    script: Script,
    pub prompts: Mutex<Vec<String>>,
}

impl ScriptedClient {
    pub fn new(f: impl Fn(&str) -> Result<String, RemoteError> + Send + Sync + 'static) -> Self {
        Self {
            script: Box::new(f),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> usize {
        self.prompts.lock().unwrap().len()
    }
}

impl RemoteModelClient for ScriptedClient {
    fn complete(&self, prompt: &str) -> Result<String, RemoteError> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        (self.script)(prompt)
    }
}
