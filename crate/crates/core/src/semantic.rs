//! Exact-scan vector index over full tuple serializations.

use rayon::prelude::*;

use crate::embed::{Embedder, EmbeddingVector};
use crate::index::IndexError;
use crate::lake::artifact::{self, ArtifactError, ArtifactKind, ByteReader, ByteWriter};
use crate::model::{serialize_record, TableId, Tuple, TupleRef};

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    entries: Vec<(TupleRef, EmbeddingVector)>,
    embedder: String,
    dim: usize,
    lake_digest: String,
}

impl VectorIndex {
    pub fn build<'a, I>(tuples: I, embedder: &dyn Embedder, lake_digest: &str) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = &'a Tuple>,
    {
        let mut tuples: Vec<&Tuple> = tuples.into_iter().collect();
        if tuples.is_empty() {
            return Err(IndexError::EmptyLake);
        }
        tuples.sort_by(|a, b| (&a.table_id, a.row_id).cmp(&(&b.table_id, b.row_id)));
        let texts: Vec<String> = tuples.par_iter().map(|t| serialize_record(t)).collect();
        let vectors = embed_all(embedder, &texts)?;
        Ok(Self {
            entries: tuples
                .iter()
                .map(|t| t.reference())
                .zip(vectors)
                .collect(),
            embedder: embedder.name().to_string(),
            dim: embedder.dim(),
            lake_digest: lake_digest.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(TupleRef, EmbeddingVector)] {
        &self.entries
    }

    pub fn embedder_name(&self) -> &str {
        &self.embedder
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lake_digest(&self) -> &str {
        &self.lake_digest
    }

    /// Embeds `text` and ranks every entry by cosine similarity.
    pub fn query(&self, embedder: &dyn Embedder, text: &str, n: usize) -> Result<Vec<(TupleRef, f64)>, IndexError> {
        if embedder.name() != self.embedder || embedder.dim() != self.dim {
            return Err(IndexError::EmbedderMismatch {
                index: format!("{}/{}", self.embedder, self.dim),
                query: format!("{}/{}", embedder.name(), embedder.dim()),
            });
        }
        let q = embedder.embed(text)?;
        Ok(self.query_vector(&q, n))
    }

    /// Exact scan; ties are broken by `(table_id, row_id)`.
    pub fn query_vector(&self, q: &EmbeddingVector, n: usize) -> Vec<(TupleRef, f64)> {
        let mut scored: Vec<(usize, f64)> = self
            .entries
            .par_iter()
            .enumerate()
            .map(|(i, (_, v))| (i, q.cosine(v)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(n);
        scored
            .into_iter()
            .map(|(i, s)| (self.entries[i].0.clone(), s))
            .collect()
    }

    pub fn encode_body(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.str(&self.embedder);
        w.u32(self.dim as u32);
        w.u32(self.entries.len() as u32);
        for (r, v) in &self.entries {
            w.str(r.table_id.as_str());
            w.u64(r.row_id);
            for x in v.values() {
                w.f64(*x);
            }
        }
        w.finish()
    }

    pub fn decode_body(body: &[u8], lake_digest: &str) -> Result<Self, ArtifactError> {
        let mut r = ByteReader::new(body);
        let embedder = r.str()?;
        let dim = r.u32()? as usize;
        let n = r.u32()? as usize;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let table = r.str()?;
            let row = r.u64()?;
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                values.push(r.f64()?);
            }
            entries.push((TupleRef::new(TableId::new(table), row), EmbeddingVector::from_raw(values)));
        }
        if !r.is_empty() {
            return Err(ArtifactError::Corrupt("trailing bytes in semantic body".into()));
        }
        Ok(Self {
            entries,
            embedder,
            dim,
            lake_digest: lake_digest.to_string(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        artifact::encode(ArtifactKind::Semantic, &self.lake_digest, &self.encode_body())
    }
}

fn embed_all(embedder: &dyn Embedder, texts: &[String]) -> Result<Vec<EmbeddingVector>, IndexError> {
    const BATCH: usize = 256;
    let batches: Vec<Result<Vec<EmbeddingVector>, _>> = texts
        .par_chunks(BATCH)
        .map(|chunk| embedder.embed_batch(chunk))
        .collect();
    let mut out = Vec::with_capacity(texts.len());
    for b in batches {
        let b = b?;
        for v in &b {
            if v.dim() != embedder.dim() {
                return Err(IndexError::Embed(crate::embed::EmbedError::Dimension {
                    expected: embedder.dim(),
                    found: v.dim(),
                }));
            }
        }
        out.extend(b);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;

    fn people() -> Vec<Tuple> {
        vec![
            Tuple::from_pairs("h", 0, &[("Name", "Ava Stone"), ("BT", "B")]).unwrap(),
            Tuple::from_pairs("h", 1, &[("Name", "Bo Marsh"), ("BT", "O")]).unwrap(),
            Tuple::from_pairs("a", 0, &[("Name", "Cy Lowe"), ("BT", "A")]).unwrap(),
        ]
    }

    #[test]
    fn entries_in_canonical_order() {
        let e = HashEmbedder::default();
        let idx = VectorIndex::build(&people(), &e, "d").unwrap();
        let refs: Vec<String> = idx.entries().iter().map(|(r, _)| r.to_string()).collect();
        assert_eq!(refs, vec!["a#0", "h#0", "h#1"]);
        assert_eq!(VectorIndex::build(&people(), &e, "d").unwrap(), idx);
    }

    #[test]
    fn self_query_ranks_first_with_unit_score() {
        let e = HashEmbedder::default();
        let ts = people();
        let idx = VectorIndex::build(&ts, &e, "d").unwrap();
        let hits = idx.query(&e, &serialize_record(&ts[1]), 3).unwrap();
        assert_eq!(hits[0].0, ts[1].reference());
        assert!((hits[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_query_scores_zero_in_tie_order() {
        let e = HashEmbedder::default();
        let idx = VectorIndex::build(&people(), &e, "d").unwrap();
        let hits = idx.query(&e, "", 2).unwrap();
        assert_eq!(hits.len(), 2);
        assert!(hits.iter().all(|(_, s)| *s == 0.0));
        assert_eq!(hits[0].0.to_string(), "a#0");
        assert_eq!(hits[1].0.to_string(), "h#0");
    }

    #[test]
    fn duplicates_share_vectors() {
        let e = HashEmbedder::default();
        let a = Tuple::from_pairs("t", 0, &[("X", "same")]).unwrap();
        let b = Tuple::from_pairs("t", 1, &[("X", "same")]).unwrap();
        let idx = VectorIndex::build([&a, &b], &e, "d").unwrap();
        assert_eq!(idx.entries()[0].1, idx.entries()[1].1);
        assert_ne!(idx.entries()[0].0, idx.entries()[1].0);
    }

    #[test]
    fn rejects_other_embedders() {
        let idx = VectorIndex::build(&people(), &HashEmbedder::default(), "d").unwrap();
        let other = HashEmbedder::new(64);
        assert!(matches!(idx.query(&other, "x", 1), Err(IndexError::EmbedderMismatch { .. })));
    }

    #[test]
    fn body_round_trip() {
        let idx = VectorIndex::build(&people(), &HashEmbedder::default(), "d").unwrap();
        assert_eq!(VectorIndex::decode_body(&idx.encode_body(), "d").unwrap(), idx);
    }
}
