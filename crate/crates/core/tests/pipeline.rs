//! Cleaning jobs over the hospital fixture lake and small hand-made lakes.

mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use common::*;
use lakeclean::embed::HashEmbedder;
use lakeclean::model::{CleaningConfig, Columns, IndexerMode, ReasonerMode, RerankerMode};
use lakeclean::pipeline::{export_cleaned, run_job, CleaningJob, JobStatus, Resources};
use lakeclean::reason::RemoteError;

fn hospital_id(job: &CleaningJob) -> String {
    job.results[0].lineage.as_ref().unwrap().source_table.to_string()
}

#[test]
fn blood_type_is_imputed_with_lineage() {
    let lake = health_lake();
    for mode in [IndexerMode::Semantic, IndexerMode::Syntactic] {
        let mut config = bt_config();
        config.indexer_mode = mode;
        let job = run_local(&config, &patients(), &lake);
        assert_eq!(job.status, JobStatus::Done, "{:?}", job.error);
        assert_eq!(job.results.len(), 1);
        let s = &job.results[0];
        assert_eq!(s.row_id, 1);
        assert_eq!(s.suggested_value.as_deref(), Some("B"));
        let l = s.lineage.as_ref().unwrap();
        assert!(l.source_table.as_str().starts_with("hospital-"));
        assert_eq!((l.source_row, l.source_attribute.as_str()), (1, "Blood_Type"));
        assert!(hospital_id(&job).starts_with("hospital-"));
        assert!(!s.is_conflict && s.existing_value.is_none());
        assert!(s.trail[0].matched);
    }
}

#[test]
fn standalone_mode_imputes_gender_rows_only() {
    let e = HashEmbedder::default();
    let client = ScriptedClient::new(|p: &str| {
        Ok(if p.contains("Marta") { "Female".to_string() } else { "\"Male\".".to_string() })
    });
    let mut config = CleaningConfig::new("patients", "Gender");
    config.relevant_columns = Columns::list(["Name", "Age"]);
    config.reasoner_mode = ReasonerMode::Remote;
    let mut res = Resources::new(&e);
    res.remote = Some(&client);
    let job = run_job(&config, &patients(), &res, None);
    assert_eq!(job.status, JobStatus::Done, "{:?}", job.error);
    let got: Vec<(u64, Option<&str>)> = job.results.iter().map(|s| (s.row_id, s.suggested_value.as_deref())).collect();
    assert_eq!(got, vec![(0, Some("Female")), (3, Some("Male"))]);
    assert!(job.results.iter().all(|s| s.lineage.is_none() && s.trail.is_empty()));
    let prompts = client.prompts.lock().unwrap();
    assert!(prompts.iter().all(|p| p.ends_with("what is the value of Gender") && !p.contains("Tuple 1")));
}

#[test]
fn standalone_no_value_phrase_leaves_value_absent() {
    let e = HashEmbedder::default();
    let client = ScriptedClient::new(|_: &str| Ok("No such value can be given.".into()));
    let mut config = CleaningConfig::new("patients", "Gender");
    config.reasoner_mode = ReasonerMode::Remote;
    let mut res = Resources::new(&e);
    res.remote = Some(&client);
    let job = run_job(&config, &patients(), &res, None);
    assert_eq!(job.status, JobStatus::Done);
    assert!(job.results.iter().all(|s| s.suggested_value.is_none()));
}

#[test]
fn no_dirty_cells_no_suggestions() {
    let table = table_from_rows("clean.csv", &["Name", "Age", "BT"], &[&["Lea Novak", "27", "A-"]]);
    let job = run_local(&bt_config(), &table, &health_lake());
    assert_eq!(job.status, JobStatus::Done);
    assert!(job.results.is_empty());
    assert_eq!(job.progress.total, 0);
}

#[test]
fn single_non_matching_candidate() {
    let table = table_from_rows("q.csv", &["Name", "Age", "BT"], &[&["Quentin Ashworth", "90", ""]]);
    let mut config = bt_config();
    config.k = 1;
    let job = run_local(&config, &table, &health_lake());
    let s = &job.results[0];
    assert_eq!(s.trail.len(), 1);
    assert!(!s.trail[0].matched);
    assert_eq!(s.suggested_value, None);
    assert_eq!(s.lineage, None);
}

#[test]
fn repair_mode_flags_only_disagreements() {
    let table = table_from_rows(
        "q.csv",
        &["Name", "Age", "Gender", "BT"],
        &[&["Jonas Brandt", "38", "Male", "b"], &["Lea Novak", "27", "Female", "O+"], &["Hanna Berg", "62", "Female", ""]],
    );
    let mut config = bt_config();
    config.repair_mode = true;
    let job = run_local(&config, &table, &health_lake());
    assert_eq!(job.results.len(), 3);
    let flags: Vec<bool> = job.results.iter().map(|s| s.is_conflict).collect();
    assert_eq!(flags, vec![false, true, false]);
    assert_eq!(job.results[2].suggested_value.as_deref(), Some("O-"));
    assert_eq!(job.results[2].existing_value, None);
}

#[test]
fn retrieval_never_builds_standalone_prompts() {
    let e = HashEmbedder::default();
    let lake = health_lake();
    let index = index_for(&lake, IndexerMode::Semantic);
    let client = ScriptedClient::new(|p: &str| {
        Ok(if p.contains("Blood_Type : B ;") { "Yes. The value is: B".into() } else { "No".into() })
    });
    let mut config = bt_config();
    config.reasoner_mode = ReasonerMode::Remote;
    let mut res = Resources::new(&e);
    res.lake = Some(&lake);
    res.index = Some(&index);
    res.remote = Some(&client);
    let job = run_job(&config, &patients(), &res, None);
    assert_eq!(job.status, JobStatus::Done, "{:?}", job.error);
    let s = &job.results[0];
    assert_eq!(s.suggested_value.as_deref(), Some("B"));
    assert_eq!(s.lineage.as_ref().unwrap().source_attribute, "Blood_Type");
    assert!(!s.model_generated);
    let prompts = client.prompts.lock().unwrap();
    assert_eq!(prompts.len(), s.trail.len());
    assert!(prompts.iter().all(|p| p.starts_with("Tuple 1: ")));
}

#[test]
fn remote_value_without_source_cell_is_flagged() {
    let e = HashEmbedder::default();
    let lake = health_lake();
    let index = index_for(&lake, IndexerMode::Semantic);
    let client = ScriptedClient::new(|_: &str| Ok("Yes: AB-".into()));
    let mut config = bt_config();
    config.reasoner_mode = ReasonerMode::Remote;
    let mut res = Resources::new(&e);
    res.lake = Some(&lake);
    res.index = Some(&index);
    res.remote = Some(&client);
    let job = run_job(&config, &patients(), &res, None);
    let s = &job.results[0];
    assert_eq!(s.suggested_value.as_deref(), Some("AB-"));
    assert!(s.lineage.is_none() && s.model_generated);
}

#[test]
fn unreachable_remote_fails_the_job() {
    let e = HashEmbedder::default();
    let client = ScriptedClient::new(|_: &str| Err(RemoteError::Transport("connection refused".into())));
    let mut config = CleaningConfig::new("patients", "Gender");
    config.reasoner_mode = ReasonerMode::Remote;
    let mut res = Resources::new(&e);
    res.remote = Some(&client);
    let job = run_job(&config, &patients(), &res, None);
    assert_eq!(job.status, JobStatus::Failed);
    assert!(job.error.unwrap().contains("connection refused"));
    assert!(job.results.is_empty());
}

#[test]
fn partial_remote_failures_are_counted() {
    let e = HashEmbedder::default();
    let client = ScriptedClient::new(|p: &str| {
        if p.contains("Marta") {
            Err(RemoteError::Timeout)
        } else if p.contains("Tomas") {
            Err(RemoteError::Refusal(String::new()))
        } else {
            Ok("Male".into())
        }
    });
    let mut config = CleaningConfig::new("patients", "Gender");
    config.reasoner_mode = ReasonerMode::Remote;
    let mut res = Resources::new(&e);
    res.remote = Some(&client);
    let job = run_job(&config, &patients(), &res, None);
    assert_eq!(job.status, JobStatus::Done);
    assert_eq!(job.telemetry.remote_failures, 1);
    assert_eq!(job.telemetry.refusals, 1);
    assert!(job.results.iter().all(|s| s.suggested_value.is_none()));
}

#[test]
fn stale_index_fails_the_job() {
    let lake = health_lake();
    let other = lake_from_rows("hospital.csv", &["Name", "Blood_Type"], &[&["Jonas Brandt", "B"]]);
    let e = HashEmbedder::default();
    let index = index_for(&other, IndexerMode::Semantic);
    let mut res = Resources::new(&e);
    res.lake = Some(&lake);
    res.index = Some(&index);
    let job = run_job(&bt_config(), &patients(), &res, None);
    assert_eq!(job.status, JobStatus::Failed);
    assert!(job.error.unwrap().contains("digest"));

    let index = index_for(&lake, IndexerMode::Syntactic);
    res.index = Some(&index);
    let job = run_job(&bt_config(), &patients(), &res, None);
    assert_eq!(job.status, JobStatus::Failed);
}

#[test]
fn invalid_config_fails_before_any_row() {
    let mut config = bt_config();
    config.relevant_columns = Columns::list(["Name", "BT"]);
    let job = run_local(&config, &patients(), &health_lake());
    assert_eq!(job.status, JobStatus::Failed);
    assert!(job.error.unwrap().contains("relevant_columns"));
}

#[test]
fn rows_with_only_dirty_pivots_get_a_warning() {
    let table = table_from_rows("q.csv", &["Name", "Age", "BT"], &[&["NULL", "", ""], &["Jonas Brandt", "38", ""]]);
    let job = run_local(&bt_config(), &table, &health_lake());
    assert_eq!(job.status, JobStatus::Done);
    assert_eq!(job.results.len(), 2);
    assert_eq!(job.results[0].suggested_value, None);
    assert!(job.results[0].trail.is_empty());
    assert_eq!(job.warnings.len(), 1);
    assert_eq!(job.results[1].suggested_value.as_deref(), Some("B"));
}

#[test]
fn rerankers_agree_on_fixture() {
    let lake = health_lake();
    for mode in [RerankerMode::Maxsim, RerankerMode::None] {
        let mut config = bt_config();
        config.reranker_mode = mode;
        let job = run_local(&config, &patients(), &lake);
        assert_eq!(job.results[0].suggested_value.as_deref(), Some("B"), "{mode:?}");
    }
    let mut config = bt_config();
    config.reranker_mode = RerankerMode::Cross;
    let job = run_local(&config, &patients(), &lake);
    assert_eq!(job.status, JobStatus::Failed, "cross needs a scorer");
}

#[test]
fn progress_reaches_total() {
    let lake = health_lake();
    let e = HashEmbedder::default();
    let index = index_for(&lake, IndexerMode::Semantic);
    let mut res = Resources::new(&e);
    res.lake = Some(&lake);
    res.index = Some(&index);
    let mut config = bt_config();
    config.repair_mode = true;
    let calls = AtomicUsize::new(0);
    let max = AtomicUsize::new(0);
    let cb = |n: usize, total: usize| {
        assert_eq!(total, 4);
        calls.fetch_add(1, Ordering::SeqCst);
        max.fetch_max(n, Ordering::SeqCst);
    };
    let job = run_job(&config, &patients(), &res, Some(&cb));
    assert_eq!(job.progress.processed, 4);
    assert_eq!(calls.load(Ordering::SeqCst), 4);
    assert_eq!(max.load(Ordering::SeqCst), 4);
}

#[test]
fn export_fills_only_dirty_cells() {
    let table = patients();
    let job = run_local(&bt_config(), &table, &health_lake());
    let e = export_cleaned(&table.columns, &table.tuples, &job.results, None, false).unwrap();
    assert_eq!(
        e.csv,
        "Name,Age,Gender,BT\nMarta Keller,51,NULL,O+\nJonas Brandt,38,Male,B\nLea Novak,27,Female,A-\nTomas Ruiz,45,NULL,AB+\n"
    );
    let rejected = export_cleaned(&table.columns, &table.tuples, &job.results, Some(&[]), false).unwrap();
    let original = std::fs::read_to_string(fixture_dir().join("patients.csv")).unwrap();
    assert_eq!(rejected.csv, original);
}

#[test]
fn job_status_moves_forward_only() {
    let mut job = CleaningJob::new(bt_config());
    assert!(job.transition(JobStatus::Done).is_err());
    job.transition(JobStatus::Running).unwrap();
    job.transition(JobStatus::Failed).unwrap();
    assert!(job.transition(JobStatus::Running).is_err());
    assert!(job.status.is_terminal());
}
