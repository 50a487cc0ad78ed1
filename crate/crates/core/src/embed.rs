//! Embedding vectors, the embedder contract, and the default hashed
//! character-trigram embedder.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DIM: usize = 256;
pub const MIN_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedError {
    #[error("embedder transport failure: {0}")]
    Transport(String),
    #[error("embedder returned a malformed response: {0}")]
    Malformed(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
}

/// A fixed-dimension vector, either unit-norm or the all-zero sentinel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Wraps raw values, scaling them to unit norm unless they are all zero.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        }
        Self(values)
    }

    /// Wraps values that are already normalized (e.g. decoded from disk).
    pub fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &Self) -> f64 {
        cosine(&self.0, &other.0)
    }
}

/// Cosine similarity; 0 when either side is the zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Text encoder contract. Implementations must be deterministic.
pub trait Embedder: Send + Sync {
    /// Identifies the model; indexes record it and refuse other embedders.
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Feature-hashing embedder over character trigrams.
///
/// Text is case-folded and its whitespace runs collapsed to single spaces;
/// every character trigram of that string (spaces included) is hashed with
/// FNV-1a to bucket `h mod d`, adding `-1` when the top bit of `h` is set
/// and `+1` otherwise. The sum is L2-normalized. Text with fewer than three
/// characters has no trigrams and maps to the zero vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM }
    }
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= MIN_DIM, "embedding dimension must be at least {MIN_DIM}");
        Self { dim }
    }

    pub fn embed_text(&self, text: &str) -> EmbeddingVector {
        hash_embed(text, self.dim)
    }
}

pub fn hash_embed(text: &str, dim: usize) -> EmbeddingVector {
    let folded = text.to_lowercase();
    let joined = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    let chars: Vec<char> = joined.chars().collect();
    let mut acc = vec![0.0f64; dim];
    let mut gram = String::with_capacity(12);
    for w in chars.windows(3) {
        gram.clear();
        gram.extend(w);
        let h = fnv1a64(gram.as_bytes());
        let bucket = (h % dim as u64) as usize;
        acc[bucket] += if h >> 63 == 1 { -1.0 } else { 1.0 };
    }
    EmbeddingVector::normalized(acc)
}

impl Embedder for HashEmbedder {
    fn name(&self) -> &str {
        "hashed-trigram"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        Ok(self.embed_text(text))
    }
}
