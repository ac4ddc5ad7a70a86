//! Binary persistence for reference indexes (`PVIX`) and embedding batches
//! (`PVEB`). All integers and floats are little-endian; strings are a `u32`
//! byte length followed by UTF-8.
//!
//! ```text
//! PVIX: "PVIX" | version u16 | dim u16 | count u32
//!       count x { id | city | continent | presence | quantity | location
//!                 | explanation | dim x f32 }
//! PVEB: "PVEB" | version u16 | dim u16 | count u32 | meta_len u32 | meta
//!       count x { id | dim x f32 }
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Embedding, IndexError, ReferenceEntry, VectorIndex};
use crate::descriptor::{presence_str, PvDescriptor};

pub const INDEX_MAGIC: &[u8; 4] = b"PVIX";
pub const EMBEDDING_MAGIC: &[u8; 4] = b"PVEB";
pub const FORMAT_VERSION: u16 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn err(&self, reason: impl Into<String>) -> IndexError {
        IndexError::Malformed {
            offset: self.pos as u64,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], IndexError> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(format!(
                "truncated while reading {what} ({n} bytes needed, {} left)",
                self.buf.len() - self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16, IndexError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String, IndexError> {
        let len = self.u32(what)? as usize;
        let start = self.pos;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| IndexError::Malformed {
            offset: start as u64,
            reason: format!("{what} is not valid UTF-8"),
        })
    }

    fn vector(&mut self, dim: usize) -> Result<Embedding, IndexError> {
        let start = self.pos;
        let bytes = self.take(dim * 4, "embedding")?;
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Embedding::new(values).map_err(|_| IndexError::Malformed {
            offset: start as u64,
            reason: "embedding has non-finite components".into(),
        })
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<(usize, usize), IndexError> {
        let m = self.take(4, "magic")?;
        if m != magic {
            self.pos = 0;
            return Err(self.err(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = self.u16("version")?;
        if version != FORMAT_VERSION {
            return Err(IndexError::Version {
                expected: FORMAT_VERSION,
                found: version,
            });
        }
        let dim = self.u16("dimension")? as usize;
        let count = self.u32("entry count")? as usize;
        Ok((dim, count))
    }

    fn finish(&self) -> Result<(), IndexError> {
        if self.pos != self.buf.len() {
            return Err(self.err(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_vec(out: &mut Vec<u8>, e: &Embedding) {
    for v in e.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn header_dim(dim: usize) -> Result<u16, IndexError> {
    u16::try_from(dim).map_err(|_| IndexError::Malformed {
        offset: 6,
        reason: format!("dimension {dim} does not fit in u16"),
    })
}

pub(super) fn write_index(index: &VectorIndex, out: &mut Vec<u8>) -> Result<(), IndexError> {
    out.extend_from_slice(INDEX_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&header_dim(index.dim)?.to_le_bytes());
    out.extend_from_slice(&(index.entries.len() as u32).to_le_bytes());
    for e in &index.entries {
        put_str(out, &e.id);
        put_str(out, &e.city);
        put_str(out, &e.continent);
        put_str(out, presence_str(e.label.presence));
        put_str(out, e.label.quantity.as_str());
        put_str(out, e.label.location.as_str());
        put_str(out, &e.label.explanation);
        put_vec(out, &e.embedding);
    }
    Ok(())
}

pub(super) fn read_index(bytes: &[u8]) -> Result<VectorIndex, IndexError> {
    let mut r = Reader::new(bytes);
    let (dim, count) = r.header(INDEX_MAGIC)?;
    let mut index = VectorIndex::new(dim);
    for _ in 0..count {
        let start = r.pos;
        let id = r.string("id")?;
        let city = r.string("city")?;
        let continent = r.string("continent")?;
        let presence = r.string("presence")?;
        let quantity = r.string("quantity")?;
        let location = r.string("location")?;
        let explanation = r.string("explanation")?;
        let label = PvDescriptor::from_canonical(&presence, &quantity, &location, &explanation)
            .map_err(|e| IndexError::Malformed {
                offset: start as u64,
                reason: format!("entry {id}: {e}"),
            })?;
        let embedding = r.vector(dim)?;
        // Entries are stored exactly as they were indexed; no renormalization.
        index
            .insert(ReferenceEntry {
                id,
                city,
                continent,
                embedding,
                label,
            })
            .map_err(|e| IndexError::Malformed {
                offset: start as u64,
                reason: e.to_string(),
            })?;
    }
    r.finish()?;
    Ok(index)
}

pub(super) fn save_index(index: &VectorIndex, path: &Path) -> Result<(), IndexError> {
    let mut buf = Vec::new();
    write_index(index, &mut buf)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub(super) fn load_index(path: &Path) -> Result<VectorIndex, IndexError> {
    read_index(&fs::read(path)?)
}

/// An ordered batch of `(id, embedding)` records as produced by the offline
/// embedding tool.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub dim: usize,
    /// Free-form provenance (encoder name, preprocessing), usually JSON.
    pub metadata: String,
    pub records: Vec<(String, Embedding)>,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Self {
        EmbeddingSet {
            dim,
            metadata: String::new(),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, e: Embedding) -> Result<(), IndexError> {
        if e.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                found: e.dim(),
            });
        }
        self.records.push((id.into(), e));
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Embedding> {
        self.records.iter().find(|(i, _)| i == id).map(|(_, e)| e)
    }

    /// Id-to-embedding lookup table.
    pub fn lookup(&self) -> std::collections::HashMap<&str, &Embedding> {
        self.records.iter().map(|(i, e)| (i.as_str(), e)).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, IndexError> {
        let mut out = Vec::new();
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&header_dim(self.dim)?.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        put_str(&mut out, &self.metadata);
        for (id, e) in &self.records {
            put_str(&mut out, id);
            put_vec(&mut out, e);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let mut r = Reader::new(bytes);
        let (dim, count) = r.header(EMBEDDING_MAGIC)?;
        let metadata = r.string("metadata")?;
        let mut set = EmbeddingSet {
            dim,
            metadata,
            records: Vec::with_capacity(count),
        };
        let mut seen = std::collections::HashSet::with_capacity(count);
        for _ in 0..count {
            let id = r.string("id")?;
            let e = r.vector(dim)?;
            if !seen.insert(id.clone()) {
                return Err(IndexError::DuplicateId(id));
            }
            set.records.push((id, e));
        }
        r.finish()?;
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        Self::from_bytes(&fs::read(path)?)
    }
}
