//! Reranking of retrieved candidates into the top-k.
//!
//! The default reranker splits tuples into `name : value` chunks, embeds each
//! chunk on its own, and scores a candidate by late interaction: for every
//! query chunk take the best cosine against any candidate chunk, then sum.
//! Negative cosines are kept in the sum. An external cross scorer can replace
//! maxsim; both paths share one ordering rule.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{EmbedError, Embedder, EmbeddingVector};
use crate::lake::Lake;
use crate::model::{project, serialize_record, serialize_tuple, Columns, ConfigError, Tuple, TupleRef};

#[derive(Debug, Error)]
pub enum RerankError {
    #[error("chunk dimension mismatch: query {query}, candidate {candidate}")]
    Dimension { query: usize, candidate: usize },
    #[error("candidate {0} does not resolve against the lake")]
    Unresolved(TupleRef),
    #[error("cross scorer failed: {0}")]
    Scorer(String),
    #[error("cross scorer returned {found} scores for {expected} pairs")]
    ScoreCount { expected: usize, found: usize },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub text: String,
    pub vector: EmbeddingVector,
}

/// A tuple split into embedded `name : value` chunks. `origin` is `None`
/// for the query side.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkedTuple {
    pub origin: Option<TupleRef>,
    pub chunks: Vec<Chunk>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub reference: TupleRef,
    pub retrieval_score: f64,
    pub rerank_score: Option<f64>,
}

impl ScoredCandidate {
    pub fn retrieved(reference: TupleRef, retrieval_score: f64) -> Self {
        Self {
            reference,
            retrieval_score,
            rerank_score: None,
        }
    }
}

/// Splits the selected attributes into chunks; absent values yield none.
pub fn chunk(t: &Tuple, cols: &Columns, embedder: &dyn Embedder) -> Result<ChunkedTuple, RerankError> {
    let projected = project(t, cols)?;
    let texts: Vec<String> = projected
        .attrs()
        .iter()
        .filter_map(|(n, v)| v.as_ref().map(|v| format!("{n} : {v}")))
        .collect();
    let vectors = embedder.embed_batch(&texts)?;
    Ok(ChunkedTuple {
        origin: None,
        chunks: texts
            .into_iter()
            .zip(vectors)
            .map(|(text, vector)| Chunk { text, vector })
            .collect(),
    })
}

/// Sum over query chunks of the best cosine against any candidate chunk.
pub fn maxsim_score(query: &ChunkedTuple, candidate: &ChunkedTuple) -> Result<f64, RerankError> {
    if query.chunks.is_empty() || candidate.chunks.is_empty() {
        return Ok(0.0);
    }
    let qd = query.chunks[0].vector.dim();
    let cd = candidate.chunks[0].vector.dim();
    if query.chunks.iter().any(|c| c.vector.dim() != qd)
        || candidate.chunks.iter().any(|c| c.vector.dim() != cd)
        || qd != cd
    {
        return Err(RerankError::Dimension {
            query: qd,
            candidate: cd,
        });
    }
    Ok(query
        .chunks
        .iter()
        .map(|q| {
            candidate
                .chunks
                .iter()
                .map(|c| q.vector.cosine(&c.vector))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum())
}

/// The shared ordering: rerank score, then retrieval score (both descending),
/// then canonical reference order.
pub fn candidate_order(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    let ra = a.rerank_score.unwrap_or(f64::NEG_INFINITY);
    let rb = b.rerank_score.unwrap_or(f64::NEG_INFINITY);
    rb.total_cmp(&ra)
        .then(b.retrieval_score.total_cmp(&a.retrieval_score))
        .then_with(|| a.reference.cmp(&b.reference))
}

fn finish(mut scored: Vec<ScoredCandidate>, k: usize) -> Vec<ScoredCandidate> {
    scored.sort_by(candidate_order);
    scored.truncate(k);
    scored
}

fn resolve<'a>(lake: &'a Lake, r: &TupleRef) -> Result<&'a Tuple, RerankError> {
    lake.resolve(r).ok_or_else(|| RerankError::Unresolved(r.clone()))
}

/// Reranks by maxsim: query chunked over its pivots, candidates over all columns.
pub fn rerank_maxsim(
    query: &Tuple,
    pivots: &[String],
    candidates: &[ScoredCandidate],
    lake: &Lake,
    k: usize,
    embedder: &dyn Embedder,
) -> Result<Vec<ScoredCandidate>, RerankError> {
    let q = chunk(query, &Columns::List(pivots.to_vec()), embedder)?;
    let scored = candidates
        .par_iter()
        .map(|c| {
            let t = resolve(lake, &c.reference)?;
            let mut cc = chunk(t, &Columns::All, embedder)?;
            cc.origin = Some(c.reference.clone());
            Ok(ScoredCandidate {
                rerank_score: Some(maxsim_score(&q, &cc)?),
                ..c.clone()
            })
        })
        .collect::<Result<Vec<_>, RerankError>>()?;
    Ok(finish(scored, k))
}

/// Keeps retrieval order, only truncating to `k`.
pub fn rerank_none(candidates: &[ScoredCandidate], k: usize) -> Vec<ScoredCandidate> {
    finish(candidates.to_vec(), k)
}

/// One query/candidate pair handed to a cross scorer. Remote scorers only
/// see the serialized texts.
#[derive(Debug, Clone, Copy)]
pub struct CrossPair<'a> {
    pub query: &'a Tuple,
    pub candidate: &'a Tuple,
    pub query_text: &'a str,
    pub candidate_text: &'a str,
}

/// Scores query/candidate pairs jointly; one score per pair, same order.
pub trait CrossScorer: Send + Sync {
    fn score(&self, pairs: &[CrossPair<'_>]) -> Result<Vec<f64>, RerankError>;
}

pub fn rerank_cross(
    query: &Tuple,
    dirty: &str,
    pivots: &[String],
    candidates: &[ScoredCandidate],
    lake: &Lake,
    scorer: &dyn CrossScorer,
    k: usize,
) -> Result<Vec<ScoredCandidate>, RerankError> {
    let query_text = serialize_tuple(query, dirty, &Columns::List(pivots.to_vec()))?;
    let tuples = candidates
        .iter()
        .map(|c| resolve(lake, &c.reference))
        .collect::<Result<Vec<_>, _>>()?;
    let texts: Vec<String> = tuples.iter().map(|t| serialize_record(t)).collect();
    let pairs: Vec<CrossPair<'_>> = tuples
        .iter()
        .zip(&texts)
        .map(|(t, text)| CrossPair {
            query,
            candidate: t,
            query_text: &query_text,
            candidate_text: text,
        })
        .collect();
    let scores = if pairs.is_empty() { Vec::new() } else { scorer.score(&pairs)? };
    if scores.len() != pairs.len() {
        return Err(RerankError::ScoreCount {
            expected: pairs.len(),
            found: scores.len(),
        });
    }
    let scored = candidates
        .iter()
        .zip(scores)
        .map(|(c, s)| ScoredCandidate {
            rerank_score: Some(s),
            ..c.clone()
        })
        .collect();
    Ok(finish(scored, k))
}

/// Exposes maxsim through the cross-scorer contract.
pub struct MaxsimScorer<'a> {
    pub embedder: &'a dyn Embedder,
    pub pivots: Vec<String>,
}

impl CrossScorer for MaxsimScorer<'_> {
    fn score(&self, pairs: &[CrossPair<'_>]) -> Result<Vec<f64>, RerankError> {
        pairs
            .iter()
            .map(|p| {
                let q = chunk(p.query, &Columns::List(self.pivots.clone()), self.embedder)?;
                let c = chunk(p.candidate, &Columns::All, self.embedder)?;
                maxsim_score(&q, &c)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{hash_embed, HashEmbedder};

    fn unit(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::normalized(v.to_vec())
    }

    fn chunked(vs: &[&[f64]]) -> ChunkedTuple {
        ChunkedTuple {
            origin: None,
            chunks: vs
                .iter()
                .map(|v| Chunk {
                    text: String::new(),
                    vector: unit(v),
                })
                .collect(),
        }
    }

    #[test]
    fn chunks_follow_tuple_order_and_skip_absent() {
        let e = HashEmbedder::default();
        let t = Tuple::from_pairs("t", 0, &[("Name", "Ali"), ("Age", "30")]).unwrap();
        let c = chunk(&t, &Columns::All, &e).unwrap();
        let texts: Vec<_> = c.chunks.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, vec!["Name : Ali", "Age : 30"]);
        assert_eq!(c.chunks[0].vector, hash_embed("Name : Ali", 256));

        let empty = Tuple::new(t.table_id.clone(), 0, vec![("Name".into(), None)]).unwrap();
        assert!(chunk(&empty, &Columns::All, &e).unwrap().chunks.is_empty());
    }

    #[test]
    fn maxsim_by_hand() {
        let q = chunked(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let c = chunked(&[&[0.6, 0.8], &[1.0, 0.0], &[-1.0, 0.0]]);
        // max(1, .6, -1) + max(0, .8, 0)
        assert!((maxsim_score(&q, &c).unwrap() - 1.8).abs() < 1e-12);
        assert_eq!(maxsim_score(&chunked(&[]), &c).unwrap(), 0.0);
        assert_eq!(maxsim_score(&q, &chunked(&[])).unwrap(), 0.0);
    }

    #[test]
    fn negative_cosines_are_not_clamped() {
        let q = chunked(&[&[1.0, 0.0]]);
        let c = chunked(&[&[-1.0, 0.0]]);
        assert!((maxsim_score(&q, &c).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let q = chunked(&[&[1.0, 0.0]]);
        let c = chunked(&[&[1.0, 0.0, 0.0]]);
        assert!(matches!(maxsim_score(&q, &c), Err(RerankError::Dimension { .. })));
    }

    #[test]
    fn self_similarity_counts_chunks() {
        let e = HashEmbedder::default();
        let t = Tuple::from_pairs("t", 0, &[("Name", "Ali"), ("Age", "30"), ("City", "Doha")]).unwrap();
        let c = chunk(&t, &Columns::All, &e).unwrap();
        assert!((maxsim_score(&c, &c).unwrap() - 3.0).abs() < 1e-6);
    }

    fn lake() -> Lake {
        Lake::register(vec![(
            "h.csv".into(),
            b"Name,Age,Blood_Type\nZed Quill,77,O\nAli Stone,30,B\nMia Park,52,A\n".to_vec(),
        )])
        .unwrap()
    }

    fn all_candidates(lake: &Lake) -> Vec<ScoredCandidate> {
        lake.tuples()
            .map(|t| ScoredCandidate::retrieved(t.reference(), 1.0))
            .collect()
    }

    #[test]
    fn identical_candidate_ranks_first() {
        let e = HashEmbedder::default();
        let l = lake();
        let q = Tuple::from_pairs("q", 0, &[("Name", "Ali Stone"), ("Age", "30"), ("BT", "")]).unwrap();
        let pivots = vec!["Name".to_string(), "Age".to_string()];
        let out = rerank_maxsim(&q, &pivots, &all_candidates(&l), &l, 2, &e).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(l.resolve(&out[0].reference).unwrap().get("Name"), Some("Ali Stone"));
        assert!((out[0].rerank_score.unwrap() - 2.0).abs() < 1e-9);

        let all = rerank_maxsim(&q, &pivots, &all_candidates(&l), &l, 10, &e).unwrap();
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn unresolvable_ref_is_an_error() {
        let e = HashEmbedder::default();
        let l = lake();
        let q = Tuple::from_pairs("q", 0, &[("Name", "Ali")]).unwrap();
        let bogus = vec![ScoredCandidate::retrieved(
            TupleRef::new(crate::model::TableId::new("nope"), 0),
            1.0,
        )];
        assert!(matches!(
            rerank_maxsim(&q, &["Name".into()], &bogus, &l, 1, &e),
            Err(RerankError::Unresolved(_))
        ));
    }

    struct Constant;
    impl CrossScorer for Constant {
        fn score(&self, pairs: &[CrossPair<'_>]) -> Result<Vec<f64>, RerankError> {
            Ok(vec![0.5; pairs.len()])
        }
    }

    struct Fixture(Vec<(&'static str, f64)>);
    impl CrossScorer for Fixture {
        fn score(&self, pairs: &[CrossPair<'_>]) -> Result<Vec<f64>, RerankError> {
            Ok(pairs
                .iter()
                .map(|p| {
                    self.0
                        .iter()
                        .find(|(name, _)| p.candidate_text.contains(name))
                        .map(|(_, s)| *s)
                        .unwrap_or(0.0)
                })
                .collect())
        }
    }

    struct Failing;
    impl CrossScorer for Failing {
        fn score(&self, _: &[CrossPair<'_>]) -> Result<Vec<f64>, RerankError> {
            Err(RerankError::Scorer("connection refused".into()))
        }
    }

    #[test]
    fn constant_scorer_falls_back_to_retrieval_order() {
        let l = lake();
        let q = Tuple::from_pairs("q", 0, &[("Name", "Ali Stone"), ("BT", "")]).unwrap();
        let mut cands = all_candidates(&l);
        for (i, c) in cands.iter_mut().enumerate() {
            c.retrieval_score = i as f64;
        }
        let out = rerank_cross(&q, "BT", &["Name".into()], &cands, &l, &Constant, 3).unwrap();
        let scores: Vec<f64> = out.iter().map(|c| c.retrieval_score).collect();
        assert_eq!(scores, vec![2.0, 1.0, 0.0]);
    }

    #[test]
    fn fixture_scores_order_the_output() {
        let l = lake();
        let q = Tuple::from_pairs("q", 0, &[("Name", "Ali Stone"), ("BT", "")]).unwrap();
        let scorer = Fixture(vec![("Mia", 0.9), ("Zed", 0.2), ("Ali", 0.5)]);
        let out = rerank_cross(&q, "BT", &["Name".into()], &all_candidates(&l), &l, &scorer, 3).unwrap();
        let names: Vec<_> = out
            .iter()
            .map(|c| l.resolve(&c.reference).unwrap().get("Name").unwrap())
            .collect();
        assert_eq!(names, vec!["Mia Park", "Ali Stone", "Zed Quill"]);
    }

    #[test]
    fn scorer_failure_propagates() {
        let l = lake();
        let q = Tuple::from_pairs("q", 0, &[("Name", "Ali Stone"), ("BT", "")]).unwrap();
        assert!(rerank_cross(&q, "BT", &["Name".into()], &all_candidates(&l), &l, &Failing, 3).is_err());
    }

    #[test]
    fn maxsim_adapter_matches_maxsim_path() {
        let e = HashEmbedder::default();
        let l = lake();
        let q = Tuple::from_pairs("q", 0, &[("Name", "Ali Stne"), ("Age", "52"), ("BT", "")]).unwrap();
        let pivots = vec!["Name".to_string(), "Age".to_string()];
        let adapter = MaxsimScorer {
            embedder: &e,
            pivots: pivots.clone(),
        };
        let a = rerank_maxsim(&q, &pivots, &all_candidates(&l), &l, 3, &e).unwrap();
        let b = rerank_cross(&q, "BT", &pivots, &all_candidates(&l), &l, &adapter, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn none_keeps_retrieval_order() {
        let l = lake();
        let mut cands = all_candidates(&l);
        cands[0].retrieval_score = 0.1;
        let out = rerank_none(&cands, 2);
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|c| c.rerank_score.is_none()));
        assert_eq!(out[0].reference, cands[1].reference);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vecs(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), n)
                .prop_filter("non-zero", |vs| vs.iter().all(|v| v.iter().any(|x| x.abs() > 1e-3)))
        }

        fn to_chunked(vs: &[Vec<f64>]) -> ChunkedTuple {
            let refs: Vec<&[f64]> = vs.iter().map(Vec::as_slice).collect();
            chunked(&refs)
        }

        proptest! {
            #[test]
            fn self_score_equals_chunk_count(vs in vecs(1..6)) {
                let c = to_chunked(&vs);
                prop_assert!((maxsim_score(&c, &c).unwrap() - vs.len() as f64).abs() < 1e-6);
            }

            #[test]
            fn permutation_invariant(q in vecs(1..5), c in vecs(1..5), rot in 0usize..5) {
                let base = maxsim_score(&to_chunked(&q), &to_chunked(&c)).unwrap();
                let mut c2 = c.clone();
                c2.rotate_left(rot % c.len());
                let mut q2 = q.clone();
                q2.reverse();
                let permuted = maxsim_score(&to_chunked(&q2), &to_chunked(&c2)).unwrap();
                prop_assert!((base - permuted).abs() < 1e-9);
            }

            #[test]
            fn extra_candidate_chunk_never_lowers_score(q in vecs(1..5), c in vecs(1..5), extra in vecs(1..2)) {
                let base = maxsim_score(&to_chunked(&q), &to_chunked(&c)).unwrap();
                let mut more = c.clone();
                more.extend(extra);
                prop_assert!(maxsim_score(&to_chunked(&q), &to_chunked(&more)).unwrap() >= base - 1e-12);
            }
        }
    }
}
