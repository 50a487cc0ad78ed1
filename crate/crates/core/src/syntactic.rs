//! Q-gram inverted index with BM25 scoring.
//!
//! Every lake tuple is serialized with all of its columns and tokenized into
//! words plus the contiguous q-grams of each word longer than `q`, so a
//! query that misspells a word still shares most of its grams.
//!
//! ```text
//! score(d) = Σ_t idf(t) · tf·(k1+1) / (tf + k1·(1 − b + b·dl/avgdl))
//! idf(t)   = ln(1 + (N − df + 0.5) / (df + 0.5))
//! ```
//!
//! The sum runs over the query token multiset, so a token repeated in the
//! query contributes once per occurrence.

use std::collections::HashMap;

use rayon::prelude::*;
use crate::index::IndexError;
use crate::lake::artifact::{self, ArtifactError, ArtifactKind, ByteReader, ByteWriter};
use crate::model::{serialize_record, TableId, Tuple, TupleRef};

pub const DEFAULT_Q: usize = 3;
pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub q: usize,
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            q: DEFAULT_Q,
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        }
    }
}

/// Splits text into lowercase alphanumeric words and emits each word plus,
/// for words longer than `q` characters, every contiguous q-gram.
pub fn tokenize(text: &str, q: usize) -> Vec<String> {
    assert!(q >= 1, "q-gram size must be at least 1");
    let folded = text.to_lowercase();
    let mut out = Vec::new();
    for word in folded.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
        out.push(word.to_string());
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > q {
            out.extend(chars.windows(q).map(|w| w.iter().collect::<String>()));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    /// Index into the document table, which is sorted by `(table_id, row_id)`.
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    postings: HashMap<String, Vec<Posting>>,
    docs: Vec<TupleRef>,
    doc_len: Vec<u32>,
    avg_doc_len: f64,
    params: Bm25Params,
    lake_digest: String,
}

impl InvertedIndex {
    /// Indexes the full serialization of every tuple.
    pub fn build<'a, I>(tuples: I, params: Bm25Params, lake_digest: &str) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = &'a Tuple>,
    {
        if params.q < 1 {
            return Err(IndexError::Param("q must be at least 1".into()));
        }
        if params.k1.is_nan() || params.k1 < 0.0 || !(0.0..=1.0).contains(&params.b) {
            return Err(IndexError::Param("k1 must be ≥ 0 and b in [0, 1]".into()));
        }
        let mut tuples: Vec<&Tuple> = tuples.into_iter().collect();
        if tuples.is_empty() {
            return Err(IndexError::EmptyLake);
        }
        tuples.sort_by(|a, b| (&a.table_id, a.row_id).cmp(&(&b.table_id, b.row_id)));

        let bags: Vec<Vec<String>> = tuples
            .par_iter()
            .map(|t| tokenize(&serialize_record(t), params.q))
            .collect();

        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(bags.len());
        for (doc, bag) in bags.into_iter().enumerate() {
            doc_len.push(bag.len() as u32);
            let mut counts: HashMap<String, u32> = HashMap::new();
            for tok in bag {
                *counts.entry(tok).or_default() += 1;
            }
            for (tok, tf) in counts {
                postings.entry(tok).or_default().push(Posting {
                    doc: doc as u32,
                    tf,
                });
            }
        }
        // Documents were visited in ascending order, so every list is sorted.
        let total: u64 = doc_len.iter().map(|&l| l as u64).sum();
        let avg_doc_len = total as f64 / doc_len.len() as f64;
        Ok(Self {
            postings,
            docs: tuples.iter().map(|t| t.reference()).collect(),
            doc_len,
            avg_doc_len,
            params,
            lake_digest: lake_digest.to_string(),
        })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn lake_digest(&self) -> &str {
        &self.lake_digest
    }

    pub fn postings(&self, token: &str) -> &[Posting] {
        self.postings.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn doc_ref(&self, doc: u32) -> &TupleRef {
        &self.docs[doc as usize]
    }

    /// Token count of a document, by reference.
    pub fn doc_len(&self, r: &TupleRef) -> Option<u32> {
        self.docs
            .binary_search(r)
            .ok()
            .map(|i| self.doc_len[i])
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.docs.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Top-`n` documents by BM25, ties broken by `(table_id, row_id)`;
    /// documents sharing no token with the query are left out.
    pub fn query(&self, text: &str, n: usize) -> Vec<(TupleRef, f64)> {
        let Bm25Params { q, k1, b } = self.params;
        let mut scores = vec![0.0f64; self.docs.len()];
        let mut hit = vec![false; self.docs.len()];
        for tok in tokenize(text, q) {
            let Some(list) = self.postings.get(&tok) else {
                continue;
            };
            let idf = self.idf(list.len());
            for p in list {
                let tf = p.tf as f64;
                let dl = self.doc_len[p.doc as usize] as f64;
                let norm = k1 * (1.0 - b + b * dl / self.avg_doc_len);
                scores[p.doc as usize] += idf * (tf * (k1 + 1.0)) / (tf + norm);
                hit[p.doc as usize] = true;
            }
        }
        let mut ranked: Vec<(usize, f64)> = scores
            .into_iter()
            .enumerate()
            .filter(|(i, s)| hit[*i] && *s > 0.0)
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(n);
        ranked
            .into_iter()
            .map(|(i, s)| (self.docs[i].clone(), s))
            .collect()
    }

    pub fn encode_body(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.u32(self.params.q as u32);
        w.f64(self.params.k1);
        w.f64(self.params.b);
        w.f64(self.avg_doc_len);
        w.u32(self.docs.len() as u32);
        for (r, len) in self.docs.iter().zip(&self.doc_len) {
            w.str(r.table_id.as_str());
            w.u64(r.row_id);
            w.u32(*len);
        }
        let mut tokens: Vec<&String> = self.postings.keys().collect();
        tokens.sort();
        w.u32(tokens.len() as u32);
        for tok in tokens {
            let list = &self.postings[tok];
            w.str(tok);
            w.u32(list.len() as u32);
            for p in list {
                w.u32(p.doc);
                w.u32(p.tf);
            }
        }
        w.finish()
    }

    pub fn decode_body(body: &[u8], lake_digest: &str) -> Result<Self, ArtifactError> {
        let mut r = ByteReader::new(body);
        let q = r.u32()? as usize;
        let k1 = r.f64()?;
        let b = r.f64()?;
        let avg_doc_len = r.f64()?;
        let n_docs = r.u32()? as usize;
        let mut docs = Vec::with_capacity(n_docs);
        let mut doc_len = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            let table = r.str()?;
            let row = r.u64()?;
            docs.push(TupleRef::new(TableId::new(table), row));
            doc_len.push(r.u32()?);
        }
        let n_tokens = r.u32()? as usize;
        let mut postings = HashMap::with_capacity(n_tokens);
        for _ in 0..n_tokens {
            let tok = r.str()?;
            let len = r.u32()? as usize;
            let mut list = Vec::with_capacity(len);
            for _ in 0..len {
                let doc = r.u32()?;
                if doc as usize >= n_docs {
                    return Err(ArtifactError::Corrupt(format!("posting points at doc {doc}")));
                }
                list.push(Posting { doc, tf: r.u32()? });
            }
            postings.insert(tok, list);
        }
        if !r.is_empty() {
            return Err(ArtifactError::Corrupt("trailing bytes in syntactic body".into()));
        }
        Ok(Self {
            postings,
            docs,
            doc_len,
            avg_doc_len,
            params: Bm25Params { q, k1, b },
            lake_digest: lake_digest.to_string(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        artifact::encode(ArtifactKind::Syntactic, &self.lake_digest, &self.encode_body())
    }
}
