//! Manifest ingestion, evaluation/reference splits and reference-index
//! construction, plus a seeded synthetic dataset generator.
//!
//! Manifest format: UTF-8 CSV with header
//! `id,city,continent,split,presence,quantity,location,explanation,embedding_ref,image_ref`.
//! `split` is `EVAL` or `REFERENCE` (case-insensitive) and may be left empty,
//! in which case [`validate_split`] reports the record. `image_ref` may be empty.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::descriptor::{CanonicalError, LocationLabel, PvDescriptor, QuantityInterval};
use crate::index::{Embedding, EmbeddingSet, IndexError, ReferenceEntry, VectorIndex};

pub const MANIFEST_COLUMNS: [&str; 10] = [
    "id",
    "city",
    "continent",
    "split",
    "presence",
    "quantity",
    "location",
    "explanation",
    "embedding_ref",
    "image_ref",
];

/// The twelve evaluation regions with their continent labels.
pub const DEFAULT_CITIES: [(&str, &str); 12] = [
    ("Kuwait City", "Asia (Middle East)"),
    ("Sydney", "Oceania"),
    ("Cape Town", "Africa"),
    ("Oxford", "Europe"),
    ("Sao Paulo", "South America"),
    ("Shanghai", "Asia (East Asia)"),
    ("Tempe", "North America"),
    ("Tacoma", "North America"),
    ("Seattle", "North America"),
    ("Orlando", "North America"),
    ("Osage Beach", "North America"),
    ("Harlem", "North America"),
];

/// Images per split per city in the reference layout.
pub const DEFAULT_PER_SPLIT: usize = 240;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {reason}")]
    Format { line: u64, reason: String },
    #[error("manifest line {line}: duplicate id {id:?}")]
    DuplicateId { line: u64, id: String },
    #[error("manifest line {line}: invalid label for {id:?}: {source}")]
    Label {
        line: u64,
        id: String,
        #[source]
        source: CanonicalError,
    },
    #[error("split violation in {city}: {reason}: {ids:?}")]
    SplitViolation {
        city: String,
        reason: &'static str,
        ids: Vec<String>,
    },
    #[error("no embedding for record {0:?}")]
    MissingEmbedding(String),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Split {
    Eval,
    Reference,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Eval => "EVAL",
            Split::Reference => "REFERENCE",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EVAL" | "EVALUATION" => Ok(Split::Eval),
            "REFERENCE" | "REF" => Ok(Split::Reference),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub id: String,
    pub city: String,
    pub continent: String,
    /// `None` when the manifest leaves the split column empty.
    pub split: Option<Split>,
    pub label: PvDescriptor,
    pub embedding_ref: String,
    pub image_ref: Option<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(e: csv::Error) -> DatasetError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    DatasetError::Format {
        line,
        reason: e.to_string(),
    }
}

/// Reads and validates a manifest file.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    read_manifest(file)
}

/// Parses manifest CSV from any reader.
pub fn read_manifest(reader: impl std::io::Read) -> Result<Vec<ManifestRecord>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let mut col = HashMap::new();
    for name in MANIFEST_COLUMNS {
        match headers.iter().position(|h| h.eq_ignore_ascii_case(name)) {
            Some(i) => {
                col.insert(name, i);
            }
            None if name == "image_ref" => {}
            None => {
                return Err(DatasetError::Format {
                    line: 1,
                    reason: format!("header is missing column {name:?}"),
                })
            }
        }
    }

    let mut seen: HashMap<String, u64> = HashMap::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let get = |name: &str| col.get(name).and_then(|&i| row.get(i)).unwrap_or("");
        let id = get("id").to_string();
        if id.is_empty() {
            return Err(DatasetError::Format {
                line,
                reason: "empty id".into(),
            });
        }
        if seen.insert(id.clone(), line).is_some() {
            return Err(DatasetError::DuplicateId { line, id });
        }
        let split = match get("split") {
            "" => None,
            s => Some(
                s.parse()
                    .map_err(|reason| DatasetError::Format { line, reason })?,
            ),
        };
        let label = PvDescriptor::from_canonical(
            get("presence"),
            get("quantity"),
            get("location"),
            get("explanation"),
        )
        .map_err(|source| DatasetError::Label {
            line,
            id: id.clone(),
            source,
        })?;
        let embedding_ref = match get("embedding_ref") {
            "" => id.clone(),
            s => s.to_string(),
        };
        let image_ref = match get("image_ref") {
            "" => None,
            s => Some(s.to_string()),
        };
        out.push(ManifestRecord {
            id,
            city: get("city").to_string(),
            continent: get("continent").to_string(),
            split,
            label,
            embedding_ref,
            image_ref,
        });
    }
    Ok(out)
}

/// Writes records in manifest format.
pub fn write_manifest(
    writer: impl std::io::Write,
    records: &[ManifestRecord],
) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MANIFEST_COLUMNS).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.id.as_str(),
            &r.city,
            &r.continent,
            r.split.map(Split::as_str).unwrap_or(""),
            crate::descriptor::presence_str(r.label.presence),
            r.label.quantity.as_str(),
            r.label.location.as_str(),
            &r.label.explanation,
            &r.embedding_ref,
            r.image_ref.as_deref().unwrap_or(""),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| DatasetError::Io {
        path: "<manifest>".into(),
        source: e,
    })
}

pub fn save_manifest(
    path: impl AsRef<Path>,
    records: &[ManifestRecord],
) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    write_manifest(std::io::BufWriter::new(file), records)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegionSplit {
    pub city: String,
    pub eval_ids: BTreeSet<String>,
    pub reference_ids: BTreeSet<String>,
}

/// Result of split validation: one split per city (sorted by city) and
/// non-fatal warnings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitReport {
    pub splits: Vec<RegionSplit>,
    pub warnings: Vec<String>,
}

/// Groups records per city and checks that evaluation and reference sets
/// are disjoint and that every record carries a split tag.
pub fn validate_split(records: &[ManifestRecord]) -> Result<SplitReport, DatasetError> {
    let mut by_city: BTreeMap<&str, RegionSplit> = BTreeMap::new();
    let mut untagged: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for r in records {
        let s = by_city.entry(&r.city).or_insert_with(|| RegionSplit {
            city: r.city.clone(),
            eval_ids: BTreeSet::new(),
            reference_ids: BTreeSet::new(),
        });
        match r.split {
            Some(Split::Eval) => {
                s.eval_ids.insert(r.id.clone());
            }
            Some(Split::Reference) => {
                s.reference_ids.insert(r.id.clone());
            }
            None => untagged.entry(&r.city).or_default().push(r.id.clone()),
        }
    }
    if let Some((city, ids)) = untagged.into_iter().next() {
        return Err(DatasetError::SplitViolation {
            city: city.to_string(),
            reason: "missing split tag",
            ids,
        });
    }
    let mut warnings = Vec::new();
    for s in by_city.values() {
        let overlap: Vec<String> = s.eval_ids.intersection(&s.reference_ids).cloned().collect();
        if !overlap.is_empty() {
            return Err(DatasetError::SplitViolation {
                city: s.city.clone(),
                reason: "ids in both evaluation and reference splits",
                ids: overlap,
            });
        }
        if s.reference_ids.is_empty() {
            warnings.push(format!(
                "{}: empty reference split; only plain assessment is possible",
                s.city
            ));
        }
    }
    Ok(SplitReport {
        splits: by_city.into_values().collect(),
        warnings,
    })
}

/// Cities whose split sizes differ from `(eval, reference)`, with a message each.
pub fn check_split_pattern(splits: &[RegionSplit], eval: usize, reference: usize) -> Vec<String> {
    splits
        .iter()
        .filter(|s| s.eval_ids.len() != eval || s.reference_ids.len() != reference)
        .map(|s| {
            format!(
                "{}: {}/{} (expected {eval}/{reference})",
                s.city,
                s.eval_ids.len(),
                s.reference_ids.len()
            )
        })
        .collect()
}

/// Builds an index over REFERENCE records, optionally leaving one city out.
pub fn build_reference_index(
    records: &[ManifestRecord],
    embeddings: &EmbeddingSet,
    exclude_city: Option<&str>,
) -> Result<VectorIndex, DatasetError> {
    let lookup = embeddings.lookup();
    let mut index = VectorIndex::new(embeddings.dim);
    for r in records {
        if r.split != Some(Split::Reference) || exclude_city == Some(r.city.as_str()) {
            continue;
        }
        let e = lookup
            .get(r.embedding_ref.as_str())
            .ok_or_else(|| DatasetError::MissingEmbedding(r.id.clone()))?;
        index.insert_normalizing(ReferenceEntry {
            id: r.id.clone(),
            city: r.city.clone(),
            continent: r.continent.clone(),
            embedding: (*e).clone(),
            label: r.label.clone(),
        })?;
    }
    Ok(index)
}

/// Settings for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    /// `(city, continent)` pairs.
    pub cities: Vec<(String, String)>,
    pub per_split: usize,
    /// Fraction of PV-positive records in each split.
    pub pv_prevalence: f64,
    pub dim: usize,
    /// Norm of the per-record Gaussian noise relative to a unit label component.
    pub noise: f64,
    /// Weight of the per-city appearance component.
    pub city_weight: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            cities: DEFAULT_CITIES
                .iter()
                .map(|(c, k)| (c.to_string(), k.to_string()))
                .collect(),
            per_split: DEFAULT_PER_SPLIT,
            pv_prevalence: 0.5,
            dim: crate::index::DEFAULT_DIM,
            noise: 1.0,
            city_weight: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    /// Uses the first `n` default cities.
    pub fn with_city_count(mut self, n: usize) -> Self {
        self.cities.truncate(n);
        self
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub records: Vec<ManifestRecord>,
    pub embeddings: EmbeddingSet,
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Generates a labeled dataset whose embeddings cluster by label.
///
/// Each embedding is the normalized sum of one unit component per presence
/// value, quantity interval and location label, a per-city component scaled
/// by `city_weight`, and isotropic noise of expected norm `noise`. Splits are
/// stratified by presence: each split of each city holds
/// `round(pv_prevalence * per_split)` positives. Positive quantity and
/// location labels are uniform over their non-NA values.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticDataset, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = cfg.dim;
    let presence_c = [random_unit(&mut rng, dim), random_unit(&mut rng, dim)];
    let quantity_c: Vec<Vec<f64>> = (0..5).map(|_| random_unit(&mut rng, dim)).collect();
    let location_c: Vec<Vec<f64>> = (0..10).map(|_| random_unit(&mut rng, dim)).collect();
    let q_index = |q: QuantityInterval| q.rank().unwrap_or(4);
    let l_index = |l: LocationLabel| LocationLabel::ALL.iter().position(|x| *x == l).unwrap_or(9);
    let noise_scale = cfg.noise / (dim as f64).sqrt();
    let positives = (cfg.pv_prevalence.clamp(0.0, 1.0) * cfg.per_split as f64).round() as usize;
    let locations: Vec<LocationLabel> = LocationLabel::ALL
        .iter()
        .copied()
        .filter(|l| !l.is_na())
        .collect();

    let mut records = Vec::new();
    let mut embeddings = EmbeddingSet::new(dim);
    embeddings.metadata = format!(
        "{{\"encoder\":\"synthetic\",\"seed\":{},\"noise\":{},\"city_weight\":{}}}",
        cfg.seed, cfg.noise, cfg.city_weight
    );
    for (city, continent) in &cfg.cities {
        let city_c = random_unit(&mut rng, dim);
        for (split, tag) in [(Split::Eval, "e"), (Split::Reference, "r")] {
            let mut flags: Vec<bool> = (0..cfg.per_split).map(|i| i < positives).collect();
            flags.shuffle(&mut rng);
            for (i, present) in flags.into_iter().enumerate() {
                let label = if present {
                    let q = QuantityInterval::ORDERED[rng.gen_range(0..4)];
                    let l = locations[rng.gen_range(0..locations.len())];
                    PvDescriptor::present(q, l, format!("synthetic array, {} panels, {}", q, l))
                } else {
                    PvDescriptor::absent("synthetic rooftop without panels")
                };
                let mut v: Vec<f64> = (0..dim)
                    .map(|j| {
                        presence_c[usize::from(label.presence)][j]
                            + quantity_c[q_index(label.quantity)][j]
                            + location_c[l_index(label.location)][j]
                            + cfg.city_weight * city_c[j]
                    })
                    .collect();
                for x in &mut v {
                    let z: f64 = rng.sample(StandardNormal);
                    *x += noise_scale * z;
                }
                let emb = Embedding::new(v.into_iter().map(|x| x as f32).collect())?.normalize()?;
                let id = format!("{}-{}-{:04}", slug(city), tag, i);
                embeddings.push(id.clone(), emb)?;
                records.push(ManifestRecord {
                    id: id.clone(),
                    city: city.clone(),
                    continent: continent.clone(),
                    split: Some(split),
                    label,
                    embedding_ref: id,
                    image_ref: None,
                });
            }
        }
    }
    Ok(SyntheticDataset {
        records,
        embeddings,
    })
}
