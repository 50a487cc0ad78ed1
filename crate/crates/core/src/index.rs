//! A lake index of either kind, with artifact persistence.

use std::path::Path;

use thiserror::Error;

use crate::embed::{EmbedError, Embedder};
use crate::lake::artifact::{self, ArtifactError, ArtifactKind};
use crate::lake::Lake;
use crate::model::{IndexerMode, TupleRef};
use crate::semantic::VectorIndex;
use crate::syntactic::{Bm25Params, InvertedIndex};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot index an empty lake")]
    EmptyLake,
    #[error("invalid index parameter: {0}")]
    Param(String),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("embedding failed: {0}")]
    Embed(#[from] EmbedError),
    #[error("index was built with embedder {index}, query uses {query}")]
    EmbedderMismatch { index: String, query: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum LakeIndex {
    Syntactic(InvertedIndex),
    Semantic(VectorIndex),
}

impl LakeIndex {
    pub fn build(lake: &Lake, mode: IndexerMode, embedder: &dyn Embedder) -> Result<Self, IndexError> {
        match mode {
            IndexerMode::Syntactic => Ok(Self::Syntactic(InvertedIndex::build(
                lake.tuples(),
                Bm25Params::default(),
                lake.digest(),
            )?)),
            IndexerMode::Semantic => Ok(Self::Semantic(VectorIndex::build(
                lake.tuples(),
                embedder,
                lake.digest(),
            )?)),
        }
    }

    pub fn mode(&self) -> IndexerMode {
        match self {
            Self::Syntactic(_) => IndexerMode::Syntactic,
            Self::Semantic(_) => IndexerMode::Semantic,
        }
    }

    pub fn lake_digest(&self) -> &str {
        match self {
            Self::Syntactic(i) => i.lake_digest(),
            Self::Semantic(i) => i.lake_digest(),
        }
    }

    /// Top-`n` lake tuples for a serialized query.
    pub fn query(&self, embedder: &dyn Embedder, text: &str, n: usize) -> Result<Vec<(TupleRef, f64)>, IndexError> {
        match self {
            Self::Syntactic(i) => Ok(i.query(text, n)),
            Self::Semantic(i) => i.query(embedder, text, n),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Self::Syntactic(i) => i.to_bytes(),
            Self::Semantic(i) => i.to_bytes(),
        }
    }

    /// Decodes an artifact; with `expected_digest` set, an index built over
    /// different lake contents is rejected.
    pub fn from_bytes(bytes: &[u8], expected_digest: Option<&str>) -> Result<Self, IndexError> {
        let a = artifact::decode(bytes, expected_digest)?;
        Ok(match a.kind {
            ArtifactKind::Syntactic => Self::Syntactic(InvertedIndex::decode_body(&a.body, &a.lake_digest)?),
            ArtifactKind::Semantic => Self::Semantic(VectorIndex::decode_body(&a.body, &a.lake_digest)?),
        })
    }

    pub fn persist(&self, path: &Path) -> Result<(), IndexError> {
        std::fs::write(path, self.to_bytes()).map_err(ArtifactError::from)?;
        Ok(())
    }

    pub fn load(path: &Path, expected_digest: Option<&str>) -> Result<Self, IndexError> {
        let bytes = std::fs::read(path).map_err(ArtifactError::from)?;
        Self::from_bytes(&bytes, expected_digest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;

    fn lake(rows: &str) -> Lake {
        Lake::register(vec![("h.csv".into(), format!("Name,City\n{rows}").into_bytes())]).unwrap()
    }

    #[test]
    fn persist_and_load_both_kinds() {
        let l = lake("Ava,Doha\nBo,Oslo\n");
        let e = HashEmbedder::default();
        let dir = tempfile::tempdir().unwrap();
        for mode in [IndexerMode::Syntactic, IndexerMode::Semantic] {
            let idx = LakeIndex::build(&l, mode, &e).unwrap();
            let p = dir.path().join(mode.as_str());
            idx.persist(&p).unwrap();
            let back = LakeIndex::load(&p, Some(l.digest())).unwrap();
            assert_eq!(back, idx);
            assert_eq!(back.mode(), mode);
        }
    }

    #[test]
    fn stale_index_rejected_after_lake_change() {
        let e = HashEmbedder::default();
        let old = lake("Ava,Doha\n");
        let bytes = LakeIndex::build(&old, IndexerMode::Syntactic, &e).unwrap().to_bytes();
        let changed = lake("Ava,Doha\nBo,Oslo\n");
        let err = LakeIndex::from_bytes(&bytes, Some(changed.digest())).unwrap_err();
        assert!(matches!(err, IndexError::Artifact(ArtifactError::DigestMismatch { .. })));
    }

    #[test]
    fn corrupt_magic_rejected() {
        let e = HashEmbedder::default();
        let mut bytes = LakeIndex::build(&lake("Ava,Doha\n"), IndexerMode::Semantic, &e).unwrap().to_bytes();
        bytes[3] = b'?';
        let err = LakeIndex::from_bytes(&bytes, None).unwrap_err();
        assert!(matches!(err, IndexError::Artifact(ArtifactError::Version(_))));
    }
}
