//! Index artifact container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "LKCLIDX\0"
//! version      u16       FORMAT_VERSION
//! kind         u8        1 = syntactic, 2 = semantic
//! digest_len   u16
//! digest       digest_len bytes, UTF-8 hex lake digest
//! body_len     u64
//! body         body_len bytes, kind-specific
//! ```
//!
//! Bodies are written with [`ByteWriter`] and read with [`ByteReader`]:
//! strings are a `u32` byte length followed by UTF-8, floats are IEEE-754
//! `f64` bit patterns, so scores survive a round trip bit-exactly.

use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"LKCLIDX\0";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    Syntactic = 1,
    Semantic = 2,
}

impl ArtifactKind {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(Self::Syntactic),
            2 => Some(Self::Semantic),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("not an index artifact or unsupported format version ({0})")]
    Version(String),
    #[error("index was built for lake digest {found}, but the registered lake has {expected}")]
    DigestMismatch { expected: String, found: String },
    #[error("artifact is truncated or corrupt: {0}")]
    Corrupt(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A decoded artifact header plus its raw body.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub kind: ArtifactKind,
    pub lake_digest: String,
    pub body: Vec<u8>,
}

pub fn encode(kind: ArtifactKind, lake_digest: &str, body: &[u8]) -> Vec<u8> {
    let mut w = ByteWriter::default();
    w.bytes(MAGIC);
    w.u16(FORMAT_VERSION);
    w.u8(kind as u8);
    w.u16(lake_digest.len() as u16);
    w.bytes(lake_digest.as_bytes());
    w.u64(body.len() as u64);
    w.bytes(body);
    w.finish()
}

/// Decodes an artifact, rejecting a stale lake digest when `expected_digest` is given.
pub fn decode(bytes: &[u8], expected_digest: Option<&str>) -> Result<Artifact, ArtifactError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(ArtifactError::Version("bad magic bytes".into()));
    }
    let mut r = ByteReader::new(&bytes[MAGIC.len()..]);
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(ArtifactError::Version(format!(
            "found version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let kind_byte = r.u8()?;
    let kind = ArtifactKind::from_byte(kind_byte)
        .ok_or_else(|| ArtifactError::Version(format!("unknown index kind {kind_byte}")))?;
    let digest_len = r.u16()? as usize;
    let lake_digest = String::from_utf8(r.take(digest_len)?.to_vec())
        .map_err(|_| ArtifactError::Corrupt("lake digest is not UTF-8".into()))?;
    let body_len = r.u64()? as usize;
    let body = r.take(body_len)?.to_vec();
    if !r.is_empty() {
        return Err(ArtifactError::Corrupt("trailing bytes after body".into()));
    }
    if let Some(expected) = expected_digest {
        if expected != lake_digest {
            return Err(ArtifactError::DigestMismatch {
                expected: expected.to_string(),
                found: lake_digest,
            });
        }
    }
    Ok(Artifact {
        kind,
        lake_digest,
        body,
    })
}

pub fn write_file(path: &Path, kind: ArtifactKind, lake_digest: &str, body: &[u8]) -> Result<(), ArtifactError> {
    std::fs::write(path, encode(kind, lake_digest, body))?;
    Ok(())
}

pub fn read_file(path: &Path, expected_digest: Option<&str>) -> Result<Artifact, ArtifactError> {
    decode(&std::fs::read(path)?, expected_digest)
}

#[derive(Debug, Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct ByteReader<'a> {
    buf: &'a [u8],
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], ArtifactError> {
        if self.buf.len() < n {
            return Err(ArtifactError::Corrupt(format!(
                "wanted {n} bytes, {} left",
                self.buf.len()
            )));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ArtifactError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8, ArtifactError> {
        Ok(self.take(1)?[0])
    }
    pub fn u16(&mut self) -> Result<u16, ArtifactError> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    pub fn u32(&mut self) -> Result<u32, ArtifactError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    pub fn u64(&mut self) -> Result<u64, ArtifactError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    pub fn f64(&mut self) -> Result<f64, ArtifactError> {
        Ok(f64::from_bits(u64::from_le_bytes(self.array()?)))
    }
    pub fn str(&mut self) -> Result<String, ArtifactError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| ArtifactError::Corrupt("string is not UTF-8".into()))
    }
    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let bytes = encode(ArtifactKind::Semantic, "abc123", b"body");
        let a = decode(&bytes, Some("abc123")).unwrap();
        assert_eq!(a.kind, ArtifactKind::Semantic);
        assert_eq!(a.body, b"body");
    }

    #[test]
    fn corrupted_magic_is_a_version_error() {
        let mut bytes = encode(ArtifactKind::Syntactic, "d", b"");
        bytes[0] ^= 0xff;
        assert!(matches!(decode(&bytes, None), Err(ArtifactError::Version(_))));
        let mut bytes = encode(ArtifactKind::Syntactic, "d", b"");
        bytes[8] = 9;
        assert!(matches!(decode(&bytes, None), Err(ArtifactError::Version(_))));
    }

    #[test]
    fn digest_mismatch_and_truncation() {
        let bytes = encode(ArtifactKind::Syntactic, "old", b"xyz");
        assert!(matches!(
            decode(&bytes, Some("new")),
            Err(ArtifactError::DigestMismatch { .. })
        ));
        assert!(matches!(
            decode(&bytes[..bytes.len() - 1], None),
            Err(ArtifactError::Corrupt(_))
        ));
    }

    #[test]
    fn floats_are_bit_exact() {
        let mut w = ByteWriter::default();
        for v in [0.1f64, -0.0, f64::MIN_POSITIVE, 1.0 / 3.0] {
            w.f64(v);
        }
        w.str("héllo");
        let buf = w.finish();
        let mut r = ByteReader::new(&buf);
        for v in [0.1f64, -0.0, f64::MIN_POSITIVE, 1.0 / 3.0] {
            assert_eq!(r.f64().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(r.str().unwrap(), "héllo");
        assert!(r.is_empty());
    }
}
