//! Pipeline invariants over randomly generated lakes and query tables.

mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use common::run_local;
use lakeclean::embed::HashEmbedder;
use lakeclean::index::LakeIndex;
use lakeclean::lake::Lake;
use lakeclean::model::{is_dirty, normalize_value, CleaningConfig, IndexerMode, ReasonerMode, TupleRef};
use lakeclean::pipeline::{run_job, JobStatus, Resources};
use lakeclean::reason::{RemoteError, RemoteModelClient};
use lakeclean::synth::{self, ImputationParams};
use proptest::prelude::*;

fn scenario(seed: u64, rows: usize, distractors: usize) -> (synth::ImputationFixture, Lake) {
    let f = synth::imputation(&ImputationParams {
        seed,
        rows,
        distractors,
        ..Default::default()
    });
    let lake = Lake::register(f.lake_sources.clone()).unwrap();
    (f, lake)
}

fn config(mode: IndexerMode, k: usize) -> CleaningConfig {
    let mut c = CleaningConfig::new("patients", "BT");
    c.datalake = Some("lake".into());
    c.indexer_mode = mode;
    c.k = k;
    c
}

struct Coin(AtomicUsize);

impl RemoteModelClient for Coin {
    fn complete(&self, prompt: &str) -> Result<String, RemoteError> {
        self.0.fetch_add(1, Ordering::SeqCst);
        // Answers depend only on the prompt, so parallel order cannot matter.
        let h = prompt.bytes().fold(0u8, |a, b| a.wrapping_add(b));
        Ok(if h % 3 == 0 { "Yes: B".into() } else { "No".into() })
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn lineage_points_at_the_suggested_cell(seed in 0u64..1000, rows in 1usize..12, distractors in 0usize..30, syntactic in any::<bool>(), k in 1usize..6) {
        let (f, lake) = scenario(seed, rows, distractors);
        let mode = if syntactic { IndexerMode::Syntactic } else { IndexerMode::Semantic };
        let job = run_local(&config(mode, k), &f.query, &lake);
        prop_assert_eq!(job.status, JobStatus::Done);
        let in_scope = f.query.tuples.iter().filter(|t| is_dirty(t.get("BT"), "NULL")).count();
        prop_assert_eq!(job.results.len(), in_scope);
        for s in &job.results {
            prop_assert!(s.trail.len() <= k);
            if let Some(l) = &s.lineage {
                let cell = lake.resolve(&TupleRef::new(l.source_table.clone(), l.source_row)).and_then(|t| t.get(&l.source_attribute));
                prop_assert_eq!(cell, s.suggested_value.as_deref());
            }
        }
    }

    #[test]
    fn one_prompt_per_trail_entry(seed in 0u64..1000, rows in 1usize..10, k in 1usize..6) {
        let (f, lake) = scenario(seed, rows, 10);
        let e = HashEmbedder::default();
        let index = LakeIndex::build(&lake, IndexerMode::Syntactic, &e).unwrap();
        let client = Coin(AtomicUsize::new(0));
        let mut c = config(IndexerMode::Syntactic, k);
        c.reasoner_mode = ReasonerMode::Remote;
        let mut res = Resources::new(&e);
        res.lake = Some(&lake);
        res.index = Some(&index);
        res.remote = Some(&client);
        let job = run_job(&c, &f.query, &res, None);
        prop_assert_eq!(job.status, JobStatus::Done);
        let trail: usize = job.results.iter().map(|s| s.trail.len()).sum();
        prop_assert_eq!(client.0.load(Ordering::SeqCst), trail);
        prop_assert!(trail <= rows * k);
        prop_assert_eq!(job.telemetry.remote_calls as usize, trail);
        for s in &job.results {
            prop_assert!(s.suggested_value.is_none() || s.trail.iter().any(|t| t.matched));
        }
    }

    #[test]
    fn clean_tables_have_no_conflicts(seed in 0u64..1000, rows in 1usize..12) {
        let f = synth::imputation(&ImputationParams { seed, rows, distractors: 20, repair_corruptions: Some(0), ..Default::default() });
        let lake = Lake::register(f.lake_sources.clone()).unwrap();
        let mut c = config(IndexerMode::Semantic, 5);
        c.repair_mode = true;
        let job = run_local(&c, &f.query, &lake);
        prop_assert_eq!(job.results.len(), rows);
        prop_assert!(job.results.iter().all(|s| !s.is_conflict));
    }

    #[test]
    fn conflict_flag_follows_values(seed in 0u64..1000, rows in 2usize..12, bad in 0usize..3) {
        let bad = bad.min(rows);
        let f = synth::imputation(&ImputationParams { seed, rows, distractors: 20, repair_corruptions: Some(bad), ..Default::default() });
        let lake = Lake::register(f.lake_sources.clone()).unwrap();
        let mut c = config(IndexerMode::Semantic, 5);
        c.repair_mode = true;
        let job = run_local(&c, &f.query, &lake);
        for s in &job.results {
            let expected = match (&s.existing_value, &s.suggested_value) {
                (Some(e), Some(v)) => normalize_value(e) != normalize_value(v),
                _ => false,
            };
            prop_assert_eq!(s.is_conflict, expected);
        }
    }
}
