//! Exact top-K retrieval over L2-normalized image embeddings.
//!
//! Search is an exhaustive scan: every admitted entry is scored, and hits are
//! ordered by ascending distance with ties broken by ascending entry id, so
//! results never depend on insertion order. Embeddings are stored as `f32`
//! and distances are accumulated in `f64`.

mod io;
pub mod metric;

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::descriptor::PvDescriptor;

pub use io::{EmbeddingSet, EMBEDDING_MAGIC, FORMAT_VERSION, INDEX_MAGIC};
pub use metric::{cosine, distance, l2_norm, similarity, similarity_from_distance};

/// Default embedding width (CLIP ViT-B/32 image features).
pub const DEFAULT_DIM: usize = 512;

/// Tolerance on `| ||v|| - 1 |` for a vector to count as normalized.
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot normalize zero embedding")]
    ZeroEmbedding,
    #[error("embedding is not normalized (norm {0})")]
    NotNormalized(f64),
    #[error("embedding has non-finite components")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no reference entries match filter")]
    EmptyAfterFilter,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("requested {requested} entries but only {available} match filter")]
    InsufficientEntries { requested: usize, available: usize },
    #[error("invalid reference label for {id}: {reason}")]
    InvalidLabel { id: String, reason: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("malformed file at byte {offset}: {reason}")]
    Malformed { offset: u64, reason: String },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u16, found: u16 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A fixed-width embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self, IndexError> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(IndexError::NonFinite);
        }
        Ok(Embedding(values))
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOLERANCE
    }

    /// Returns `v / ||v||_2`, computed in `f64` and stored as `f32`.
    pub fn normalize(&self) -> Result<Embedding, IndexError> {
        let n = self.norm();
        if n == 0.0 {
            return Err(IndexError::ZeroEmbedding);
        }
        Ok(Embedding(
            self.0.iter().map(|&x| (f64::from(x) / n) as f32).collect(),
        ))
    }

    pub fn distance(&self, other: &Embedding) -> Result<f64, IndexError> {
        distance(&self.0, &other.0)
    }

    pub fn similarity(&self, other: &Embedding) -> Result<f64, IndexError> {
        similarity(&self.0, &other.0)
    }
}

/// One validated rooftop case in the reference repository.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceEntry {
    pub id: String,
    pub city: String,
    pub continent: String,
    pub embedding: Embedding,
    pub label: PvDescriptor,
}

/// A scored retrieval result.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalHit {
    pub entry: ReferenceEntry,
    pub distance: f64,
    pub similarity: f64,
}

/// Predicate over entries: excluded cities and excluded ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntryFilter {
    excluded_cities: Vec<String>,
    excluded_ids: Vec<String>,
}

impl EntryFilter {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn excluding_city(mut self, city: impl Into<String>) -> Self {
        self.excluded_cities.push(city.into());
        self
    }

    pub fn excluding_id(mut self, id: impl Into<String>) -> Self {
        self.excluded_ids.push(id.into());
        self
    }

    pub fn admits(&self, entry: &ReferenceEntry) -> bool {
        !self.excluded_cities.contains(&entry.city) && !self.excluded_ids.contains(&entry.id)
    }
}

/// In-memory reference index. Immutable once built; `&VectorIndex` is safe to
/// share across threads for concurrent searches.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    entries: Vec<ReferenceEntry>,
    positions: HashMap<String, usize>,
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        VectorIndex {
            dim,
            entries: Vec::new(),
            positions: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ReferenceEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&ReferenceEntry> {
        self.position(id).map(|i| &self.entries[i])
    }

    /// Insertion position of entry `id`.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    /// Adds an entry whose embedding must already be normalized.
    pub fn insert(&mut self, entry: ReferenceEntry) -> Result<(), IndexError> {
        if entry.embedding.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                found: entry.embedding.dim(),
            });
        }
        if !entry.embedding.is_normalized() {
            return Err(IndexError::NotNormalized(entry.embedding.norm()));
        }
        if let Err(v) = entry.label.validate() {
            return Err(IndexError::InvalidLabel {
                id: entry.id,
                reason: v.to_string(),
            });
        }
        if self.positions.contains_key(&entry.id) {
            return Err(IndexError::DuplicateId(entry.id));
        }
        self.positions.insert(entry.id.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    /// Normalizes the embedding, then inserts.
    pub fn insert_normalizing(&mut self, mut entry: ReferenceEntry) -> Result<(), IndexError> {
        entry.embedding = entry.embedding.normalize()?;
        self.insert(entry)
    }

    /// Number of entries admitted by `filter`.
    pub fn count_admitted(&self, filter: &EntryFilter) -> usize {
        self.entries.iter().filter(|e| filter.admits(e)).count()
    }

    /// The `k` nearest admitted entries to `query` (normalized first), ordered
    /// by ascending distance then ascending id. Returns fewer than `k` hits
    /// when fewer entries are admitted.
    pub fn search_topk(
        &self,
        query: &Embedding,
        k: usize,
        filter: &EntryFilter,
    ) -> Result<Vec<RetrievalHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                found: query.dim(),
            });
        }
        let q = query.normalize()?;
        let mut scored: Vec<(f64, &ReferenceEntry)> = self
            .entries
            .iter()
            .filter(|e| filter.admits(e))
            .map(|e| {
                let d2 = metric::squared_distance_unchecked(q.values(), e.embedding.values());
                (d2, e)
            })
            .collect();
        if scored.is_empty() {
            return Err(IndexError::EmptyAfterFilter);
        }
        let order = |a: &(f64, &ReferenceEntry), b: &(f64, &ReferenceEntry)| -> Ordering {
            a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id))
        };
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        Ok(scored
            .into_iter()
            .map(|(d2, e)| {
                let distance = d2.sqrt();
                RetrievalHit {
                    entry: e.clone(),
                    distance,
                    similarity: similarity_from_distance(distance),
                }
            })
            .collect())
    }

    /// `k` distinct admitted entries drawn uniformly without replacement.
    /// The same seed always yields the same sample, in the same order.
    pub fn random_sample(
        &self,
        k: usize,
        seed: u64,
        filter: &EntryFilter,
    ) -> Result<Vec<&ReferenceEntry>, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        let admitted: Vec<&ReferenceEntry> =
            self.entries.iter().filter(|e| filter.admits(e)).collect();
        if admitted.len() < k {
            return Err(IndexError::InsufficientEntries {
                requested: k,
                available: admitted.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(sample(&mut rng, admitted.len(), k)
            .into_iter()
            .map(|i| admitted[i])
            .collect())
    }

    /// Writes the index in the `PVIX` binary format.
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), IndexError> {
        io::save_index(self, path.as_ref())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, IndexError> {
        io::load_index(path.as_ref())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, IndexError> {
        let mut buf = Vec::new();
        io::write_index(self, &mut buf)?;
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        io::read_index(bytes)
    }
}
