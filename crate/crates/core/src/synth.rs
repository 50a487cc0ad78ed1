//! Seeded synthetic tables and lakes with known ground truth.
//!
//! Everything here is deterministic in the seed, so tests and benchmarks can
//! rebuild identical inputs and compare outputs byte for byte.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lake::{csv, load_table};
use crate::model::{TableId, Tuple};
use crate::pipeline::QueryTable;
use crate::reason::LabeledPair;

pub const BLOOD_TYPES: &[&str] = &["A+", "A-", "B+", "B-", "AB+", "AB-", "O+", "O-"];

const FIRST: &[&str] = &[
    "Ava", "Ben", "Cleo", "Dario", "Elin", "Farid", "Greta", "Hugo", "Ines", "Jonas", "Kira", "Luca", "Mira", "Nils",
    "Omar", "Petra", "Quinn", "Rosa", "Sven", "Tara", "Umar", "Vera", "Wim", "Xenia", "Yusuf", "Zora",
];
const SYLLABLES: &[&str] = &[
    "bar", "kel", "mon", "dri", "sta", "vok", "len", "tor", "ash", "qui", "pel", "zan", "ric", "hov", "mek", "sul",
    "fay", "gor", "lim", "nes", "wat", "jup", "cro", "bel",
];
const CITIES: &[&str] = &[
    "Oslo", "Lyon", "Porto", "Graz", "Ghent", "Turku", "Varna", "Bilbao", "Krakow", "Malmo", "Split", "Cork",
];
const WARDS: &[&str] = &["North", "South", "East", "West", "Annex"];
const DOCTORS: &[&str] = &["Dr Hale", "Dr Imre", "Dr Lund", "Dr Oke", "Dr Rao"];
const JOBS: &[&str] = &["baker", "pilot", "nurse", "welder", "clerk", "tailor", "chemist", "farmer"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Person record used to populate query tables and lakes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Person {
    pub name: String,
    pub age: u32,
    pub city: String,
    pub blood: String,
}

/// `count` people with pairwise-distinct names not in `exclude`.
pub fn people(rng: &mut ChaCha8Rng, count: usize, exclude: &mut HashSet<String>) -> Vec<Person> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let first = FIRST.choose(rng).unwrap();
        let parts = rng.random_range(2..=3);
        let mut last: String = (0..parts).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
        last[..1].make_ascii_uppercase();
        let name = format!("{first} {last}");
        if !exclude.insert(name.clone()) {
            continue;
        }
        out.push(Person {
            name,
            age: rng.random_range(18..=90),
            city: CITIES.choose(rng).unwrap().to_string(),
            blood: BLOOD_TYPES.choose(rng).unwrap().to_string(),
        });
    }
    out
}

/// Pairwise-distinct tuples with columns `Name, Age, City, Occupation`.
pub fn distinct_tuples(seed: u64, count: usize, table: &str) -> Vec<Tuple> {
    let mut r = rng(seed);
    let mut seen = HashSet::new();
    people(&mut r, count, &mut seen)
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let age = p.age.to_string();
            let job = *JOBS.choose(&mut r).unwrap();
            Tuple::from_pairs(table, i as u64, &[("Name", &p.name), ("Age", &age), ("City", &p.city), ("Occupation", job)])
                .expect("fixed unique columns")
        })
        .collect()
}

/// Renders a header and rows as CSV bytes.
pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut out = String::new();
    csv::write_record(&mut out, header);
    for r in rows {
        csv::write_record(&mut out, r);
    }
    out.into_bytes()
}

#[derive(Debug, Clone)]
pub struct ImputationParams {
    pub seed: u64,
    pub rows: usize,
    pub distractors: usize,
    /// Query rows whose matching lake cell holds a wrong value.
    pub corrupt_lake: usize,
    /// When set, the query's dirty column is filled and this many of its
    /// values disagree with the lake.
    pub repair_corruptions: Option<usize>,
}

impl Default for ImputationParams {
    fn default() -> Self {
        Self {
            seed: 7,
            rows: 100,
            distractors: 500,
            corrupt_lake: 0,
            repair_corruptions: None,
        }
    }
}

/// A query table over `Name, Age, City, BT` plus a three-table lake. Every
/// query entity has one exact copy in the lake, with the blood type stored
/// under `Blood_Type` or `BloodType`.
#[derive(Debug, Clone)]
pub struct ImputationFixture {
    pub query: QueryTable,
    pub query_csv: Vec<u8>,
    pub lake_sources: Vec<(String, Vec<u8>)>,
    /// True blood type for every query row.
    pub truth: BTreeMap<u64, String>,
    /// Query rows whose lake copy carries a corrupted value.
    pub corrupted_lake: BTreeSet<u64>,
    /// Query rows whose existing value disagrees with the lake.
    pub corrupted_query: BTreeSet<u64>,
}

fn other_blood(rng: &mut ChaCha8Rng, not: &str) -> String {
    let pool: Vec<&&str> = BLOOD_TYPES.iter().filter(|b| **b != not).collect();
    pool.choose(rng).unwrap().to_string()
}

fn pick(rng: &mut ChaCha8Rng, n: usize, of: usize) -> BTreeSet<u64> {
    let mut ids: Vec<u64> = (0..of as u64).collect();
    ids.shuffle(rng);
    ids.into_iter().take(n).collect()
}

pub fn imputation(opts: &ImputationParams) -> ImputationFixture {
    let mut r = rng(opts.seed);
    let mut names = HashSet::new();
    let entities = people(&mut r, opts.rows, &mut names);
    let distractors = people(&mut r, opts.distractors, &mut names);

    let corrupted_lake = pick(&mut r, opts.corrupt_lake, opts.rows);
    let corrupted_query = pick(&mut r, opts.repair_corruptions.unwrap_or(0), opts.rows);

    let mut query_rows = Vec::with_capacity(opts.rows);
    let mut hospital = Vec::new();
    let mut clinic = Vec::new();
    let mut registry = Vec::new();
    for (i, p) in entities.iter().enumerate() {
        let id = i as u64;
        let existing = match opts.repair_corruptions {
            None => String::new(),
            Some(_) if corrupted_query.contains(&id) => other_blood(&mut r, &p.blood),
            Some(_) => p.blood.clone(),
        };
        query_rows.push(vec![p.name.clone(), p.age.to_string(), p.city.clone(), existing]);
        let stored = if corrupted_lake.contains(&id) {
            other_blood(&mut r, &p.blood)
        } else {
            p.blood.clone()
        };
        if i % 2 == 0 {
            let ward = WARDS.choose(&mut r).unwrap().to_string();
            hospital.push(vec![p.name.clone(), p.age.to_string(), p.city.clone(), stored, ward]);
        } else {
            let doc = DOCTORS.choose(&mut r).unwrap().to_string();
            clinic.push(vec![p.name.clone(), p.age.to_string(), p.city.clone(), stored, doc]);
        }
    }
    for (i, p) in distractors.iter().enumerate() {
        match i % 3 {
            0 => {
                let ward = WARDS.choose(&mut r).unwrap().to_string();
                hospital.push(vec![p.name.clone(), p.age.to_string(), p.city.clone(), p.blood.clone(), ward]);
            }
            1 => {
                let doc = DOCTORS.choose(&mut r).unwrap().to_string();
                clinic.push(vec![p.name.clone(), p.age.to_string(), p.city.clone(), p.blood.clone(), doc]);
            }
            _ => {
                let phone = format!("555-{:04}", r.random_range(0..10_000));
                registry.push(vec![p.name.clone(), p.age.to_string(), p.city.clone(), phone]);
            }
        }
    }
    hospital.shuffle(&mut r);
    clinic.shuffle(&mut r);
    registry.shuffle(&mut r);

    let query_csv = csv_bytes(&["Name", "Age", "City", "BT"], &query_rows);
    let query = load_table(&query_csv, "patients.csv").expect("generated CSV is valid").into();
    let lake_sources = vec![
        ("hospital.csv".to_string(), csv_bytes(&["Name", "Age", "City", "Blood_Type", "Ward"], &hospital)),
        ("clinic.csv".to_string(), csv_bytes(&["Name", "Age", "City", "BloodType", "Doctor"], &clinic)),
        ("registry.csv".to_string(), csv_bytes(&["Name", "Age", "City", "Phone"], &registry)),
    ];
    ImputationFixture {
        query,
        query_csv,
        lake_sources,
        truth: entities.iter().enumerate().map(|(i, p)| (i as u64, p.blood.clone())).collect(),
        corrupted_lake,
        corrupted_query,
    }
}

/// Query table of ten rows and a lake in which row `i` shares tokens with
/// exactly `i` lake tuples under syntactic retrieval. Returns the per-row
/// candidate counts.
///
/// Every value is at most three characters, so tokens are whole words and
/// no q-gram can leak between rows; lake column names share no token with
/// the query's.
pub fn budget_fixture() -> (QueryTable, Vec<(String, Vec<u8>)>, Vec<usize>) {
    let rows: Vec<Vec<String>> = (0..10).map(|i| vec![format!("n{i:02}"), format!("c{i:02}"), String::new()]).collect();
    let query_csv = csv_bytes(&["Name", "City", "BT"], &rows);
    let query = load_table(&query_csv, "budget.csv").expect("valid").into();
    let mut lake = Vec::new();
    let mut tag = 0;
    for i in 0..10 {
        for _ in 0..i {
            lake.push(vec![format!("n{i:02}"), format!("t{tag:02}"), "x".to_string()]);
            tag += 1;
        }
    }
    let sources = vec![("people.csv".to_string(), csv_bytes(&["who", "tag", "val"], &lake))];
    (query, sources, (0..10).collect())
}

/// A labeled set of (query, candidate) pairs for threshold calibration,
/// mixing exact copies, copies with one perturbed pivot, other entities,
/// and candidates lacking the target attribute.
pub fn labeled_pairs(seed: u64, count: usize) -> Vec<LabeledPair> {
    let mut r = rng(seed);
    let mut names = HashSet::new();
    let ps = people(&mut r, count * 2, &mut names);
    let pivots = vec!["Name".to_string(), "Age".to_string(), "City".to_string()];
    let q = |p: &Person, row: u64| {
        Tuple::from_pairs("q", row, &[("Name", &p.name), ("Age", &p.age.to_string()), ("City", &p.city), ("BT", "")]).unwrap()
    };
    let with_bt = |row: u64, name: &str, age: String, city: &str, attr: &str, blood: &str| {
        Tuple::new(
            TableId::new("lake"),
            row,
            vec![
                ("Name".into(), Some(name.to_string())),
                ("Age".into(), Some(age)),
                ("City".into(), Some(city.to_string())),
                (attr.to_string(), Some(blood.to_string())),
            ],
        )
        .unwrap()
    };
    (0..count)
        .map(|i| {
            let p = &ps[i];
            let row = i as u64;
            let (candidate, is_match) = match i % 4 {
                0 => (with_bt(row, &p.name, p.age.to_string(), &p.city, "Blood_Type", &p.blood), true),
                1 => (with_bt(row, &p.name, (p.age + 1).to_string(), &p.city, "blood type", &p.blood), true),
                2 => {
                    let o = &ps[count + i];
                    (with_bt(row, &o.name, o.age.to_string(), &o.city, "Blood_Type", &o.blood), false)
                }
                _ => {
                    let phone = format!("555-{:04}", r.random_range(0..10_000));
                    (with_bt(row, &p.name, p.age.to_string(), &p.city, "Phone", &phone), false)
                }
            };
            LabeledPair {
                query: q(p, row),
                candidate,
                dirty: "BT".to_string(),
                pivots: pivots.clone(),
                is_match,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_seed_stable() {
        let a = imputation(&ImputationParams::default());
        let b = imputation(&ImputationParams::default());
        assert_eq!(a.query_csv, b.query_csv);
        assert_eq!(a.lake_sources, b.lake_sources);
        assert_eq!(distinct_tuples(3, 50, "t"), distinct_tuples(3, 50, "t"));
    }

    #[test]
    fn imputation_shape() {
        let f = imputation(&ImputationParams {
            corrupt_lake: 20,
            repair_corruptions: Some(10),
            ..Default::default()
        });
        assert_eq!(f.query.tuples.len(), 100);
        assert_eq!(f.truth.len(), 100);
        assert_eq!(f.corrupted_lake.len(), 20);
        assert_eq!(f.corrupted_query.len(), 10);
        let lake_rows: usize = f
            .lake_sources
            .iter()
            .map(|(n, b)| load_table(b, n).unwrap().tuples.len())
            .sum();
        assert_eq!(lake_rows, 600);
        for t in &f.query.tuples {
            let v = t.get("BT").unwrap();
            let truth = &f.truth[&t.row_id];
            assert_eq!(v != truth, f.corrupted_query.contains(&t.row_id));
        }
    }

    #[test]
    fn distinct_tuples_are_distinct() {
        let ts = distinct_tuples(11, 1000, "t");
        let names: HashSet<_> = ts.iter().map(|t| t.get("Name").unwrap().to_string()).collect();
        assert_eq!(names.len(), 1000);
    }

    #[test]
    fn labeled_pairs_have_both_classes() {
        let ps = labeled_pairs(5, 20);
        let pos = ps.iter().filter(|p| p.is_match).count();
        assert_eq!(pos, 10);
    }
}
