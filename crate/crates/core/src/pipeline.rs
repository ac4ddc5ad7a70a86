//! Dataset-level assessment runs, scoring, and the retrieval ablations.
//!
//! Queries are the EVAL records of a manifest; references come from an index
//! over the REFERENCE records. Per-query backend or output failures become
//! failure lines; retrieval failures abort the run because they signal a
//! configuration problem shared by every query.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use thiserror::Error;

use crate::assessor::{
    AssessError, AssessmentBackend, AssessmentMode, Assessor, ImageRef, PromptTemplates, Query,
    RetryPolicy,
};
use crate::dataset::{DatasetError, ManifestRecord, Split};
use crate::descriptor::PvDescriptor;
use crate::evaluation::{
    aggregate, Averaging, EvalError, PredictionLine, ScoredRecord, Task, OVERALL,
};
use crate::index::{EmbeddingSet, EntryFilter, IndexError, VectorIndex};

/// K values of the default sensitivity sweep.
pub const DEFAULT_K_SWEEP: [usize; 5] = [0, 1, 3, 5, 10];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("{0}")]
    Assess(AssessError),
    #[error("prediction for {0:?} does not match any EVAL record")]
    UnknownPrediction(String),
    #[error("manifest has no EVAL records")]
    NoQueries,
    #[error("random retrieval needs {k} references but only {available} are admitted")]
    TooFewReferences { k: usize, available: usize },
}

/// Everything needed to assess a manifest's EVAL split.
pub struct Pipeline<'a> {
    pub records: &'a [ManifestRecord],
    pub embeddings: &'a EmbeddingSet,
    pub index: &'a VectorIndex,
    pub backend: &'a dyn AssessmentBackend,
    pub templates: PromptTemplates,
    pub retry: RetryPolicy,
    pub concurrency: usize,
    /// Reference id -> image, attached to RAG requests when present.
    pub reference_images: Option<HashMap<String, ImageRef>>,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        records: &'a [ManifestRecord],
        embeddings: &'a EmbeddingSet,
        index: &'a VectorIndex,
        backend: &'a dyn AssessmentBackend,
    ) -> Self {
        Pipeline {
            records,
            embeddings,
            index,
            backend,
            templates: PromptTemplates::default(),
            retry: RetryPolicy::default(),
            concurrency: 1,
            reference_images: None,
        }
    }

    /// Collects image refs of REFERENCE records for attachment.
    pub fn attach_reference_images(mut self) -> Self {
        let map = self
            .records
            .iter()
            .filter(|r| r.split == Some(Split::Reference))
            .filter_map(|r| {
                r.image_ref
                    .as_deref()
                    .map(|i| (r.id.clone(), ImageRef::parse(i)))
            })
            .collect();
        self.reference_images = Some(map);
        self
    }

    /// EVAL records in manifest order, optionally restricted to one city.
    pub fn eval_records(&self, city: Option<&str>) -> Vec<&'a ManifestRecord> {
        self.records
            .iter()
            .filter(|r| r.split == Some(Split::Eval))
            .filter(|r| city.is_none_or(|c| r.city == c))
            .collect()
    }

    fn queries(&self, records: &[&'a ManifestRecord]) -> Result<Vec<Query<'a>>, PipelineError> {
        let lookup = self.embeddings.lookup();
        records
            .iter()
            .map(|r| {
                let embedding = *lookup
                    .get(r.embedding_ref.as_str())
                    .ok_or_else(|| DatasetError::MissingEmbedding(r.id.clone()))?;
                Ok(Query {
                    id: r.id.as_str(),
                    embedding,
                    image: r.image_ref.as_deref().map(ImageRef::parse),
                })
            })
            .collect()
    }

    fn assessor(&self, leave_out: Option<&str>) -> Assessor<'_> {
        let mut a = Assessor::new(self.index, self.backend)
            .with_templates(self.templates.clone())
            .with_retry(self.retry)
            .leave_out_city(leave_out.map(str::to_string));
        if let Some(images) = &self.reference_images {
            a = a.with_reference_images(images);
        }
        a
    }

    fn check_random(
        &self,
        mode: AssessmentMode,
        leave_out: Option<&str>,
    ) -> Result<(), PipelineError> {
        if let AssessmentMode::Random { k, .. } = mode {
            let mut filter = EntryFilter::none();
            if let Some(c) = leave_out {
                filter = filter.excluding_city(c);
            }
            let available = self.index.count_admitted(&filter);
            if available < k {
                return Err(PipelineError::TooFewReferences { k, available });
            }
        }
        Ok(())
    }

    /// Assesses `records` and returns one prediction line per record, in order.
    pub fn predict_records(
        &self,
        records: &[&'a ManifestRecord],
        mode: AssessmentMode,
        leave_out: Option<&str>,
    ) -> Result<Vec<PredictionLine>, PipelineError> {
        self.check_random(mode, leave_out)?;
        let queries = self.queries(records)?;
        let results = self
            .assessor(leave_out)
            .assess_batch(&queries, mode, self.concurrency);
        results
            .into_iter()
            .zip(&queries)
            .map(|(r, q)| match r {
                Ok(a) => Ok(PredictionLine::success(
                    q.id,
                    &a.descriptor,
                    a.reference_ids,
                )),
                Err(e @ (AssessError::Retrieval { .. } | AssessError::Prompt(_))) => {
                    Err(PipelineError::Assess(e))
                }
                Err(e) => {
                    log::warn!("{e}");
                    Ok(PredictionLine::failure(q.id, e))
                }
            })
            .collect()
    }

    /// Assesses every EVAL record. With `leave_out_own_city`, each city's
    /// queries see an index without that city's references.
    pub fn predict(
        &self,
        mode: AssessmentMode,
        leave_out_own_city: bool,
    ) -> Result<Vec<PredictionLine>, PipelineError> {
        let all = self.eval_records(None);
        if all.is_empty() {
            return Err(PipelineError::NoQueries);
        }
        if !leave_out_own_city {
            return self.predict_records(&all, mode, None);
        }
        let mut by_id: HashMap<String, PredictionLine> = HashMap::new();
        for city in eval_cities(&all) {
            let recs = self.eval_records(Some(&city));
            for line in self.predict_records(&recs, mode, Some(&city))? {
                by_id.insert(line.id.clone(), line);
            }
        }
        Ok(all.iter().filter_map(|r| by_id.remove(&r.id)).collect())
    }

    /// Scores prediction lines against the manifest labels.
    pub fn score(&self, lines: &[PredictionLine]) -> Result<Vec<ScoredRecord>, PipelineError> {
        let mut preds = BTreeMap::new();
        for l in lines {
            let d = l.descriptor().map_err(|reason| EvalError::Predictions {
                line: 0,
                reason: format!("{}: {reason}", l.id),
            })?;
            preds.insert(l.id.clone(), d);
        }
        score_predictions(self.records, &preds)
    }

    /// Accuracy-vs-K sweep. K = 0 runs the PLAIN mode.
    pub fn k_sweep(&self, ks: &[usize]) -> Result<Vec<KSweepRow>, PipelineError> {
        ks.iter()
            .map(|&k| {
                let mode = AssessmentMode::rag(k);
                let scored = self.score(&self.predict(mode, false)?)?;
                let acc = overall_accuracy(&scored)?;
                Ok(KSweepRow {
                    k,
                    mode: mode.label(),
                    accuracy: acc,
                    n_records: scored.len(),
                })
            })
            .collect()
    }

    /// Similar versus random references at the same K.
    pub fn random_vs_similar(&self, k: usize, seed: u64) -> Result<PairedAccuracy, PipelineError> {
        let similar = self.score(&self.predict(AssessmentMode::rag(k), false)?)?;
        let random = self.score(&self.predict(AssessmentMode::Random { k, seed }, false)?)?;
        Ok(PairedAccuracy {
            k,
            seed,
            similar: overall_accuracy(&similar)?,
            random: overall_accuracy(&random)?,
            n_records: similar.len(),
        })
    }

    /// One row per city: that city's queries against an index without it.
    pub fn leave_one_out(&self, k: usize) -> Result<Vec<LeaveOneOutRow>, PipelineError> {
        let all = self.eval_records(None);
        if all.is_empty() {
            return Err(PipelineError::NoQueries);
        }
        eval_cities(&all)
            .into_iter()
            .map(|city| {
                let recs = self.eval_records(Some(&city));
                let lines = self.predict_records(&recs, AssessmentMode::rag(k), Some(&city))?;
                let scored = self.score(&lines)?;
                let filter = EntryFilter::none().excluding_city(city.clone());
                Ok(LeaveOneOutRow {
                    n_references: self.index.count_admitted(&filter),
                    accuracy: overall_accuracy(&scored)?,
                    n_records: scored.len(),
                    city,
                })
            })
            .collect()
    }
}

fn eval_cities(records: &[&ManifestRecord]) -> Vec<String> {
    records
        .iter()
        .map(|r| r.city.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Scores predictions for EVAL records, in manifest order. EVAL records
/// without a prediction are skipped; predictions for unknown ids are errors.
pub fn score_predictions(
    records: &[ManifestRecord],
    preds: &BTreeMap<String, Option<PvDescriptor>>,
) -> Result<Vec<ScoredRecord>, PipelineError> {
    let eval: HashMap<&str, &ManifestRecord> = records
        .iter()
        .filter(|r| r.split == Some(Split::Eval))
        .map(|r| (r.id.as_str(), r))
        .collect();
    if let Some(id) = preds.keys().find(|id| !eval.contains_key(id.as_str())) {
        return Err(PipelineError::UnknownPrediction(id.clone()));
    }
    Ok(records
        .iter()
        .filter(|r| r.split == Some(Split::Eval))
        .filter_map(|r| {
            preds
                .get(&r.id)
                .map(|p| ScoredRecord::score(&r.id, &r.city, p.as_ref(), &r.label))
        })
        .collect())
}

/// Micro-averaged accuracy per task for one run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TaskAccuracy {
    pub presence: f64,
    pub quantity: f64,
    pub location: f64,
}

impl TaskAccuracy {
    pub fn get(&self, task: Task) -> f64 {
        match task {
            Task::Presence => self.presence,
            Task::Quantity => self.quantity,
            Task::Location => self.location,
        }
    }
}

pub fn overall_accuracy(scored: &[ScoredRecord]) -> Result<TaskAccuracy, PipelineError> {
    let table = aggregate(&[scored.to_vec()], Averaging::Micro)?;
    let get = |t| table.get(OVERALL, t).map(|r| r.mean).unwrap_or(0.0);
    Ok(TaskAccuracy {
        presence: get(Task::Presence),
        quantity: get(Task::Quantity),
        location: get(Task::Location),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSweepRow {
    pub k: usize,
    pub mode: &'static str,
    pub accuracy: TaskAccuracy,
    pub n_records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedAccuracy {
    pub k: usize,
    pub seed: u64,
    pub similar: TaskAccuracy,
    pub random: TaskAccuracy,
    pub n_records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeaveOneOutRow {
    pub city: String,
    pub n_records: usize,
    pub n_references: usize,
    pub accuracy: TaskAccuracy,
}

pub fn write_k_sweep(out: &mut (impl Write + ?Sized), rows: &[KSweepRow]) -> std::io::Result<()> {
    writeln!(out, "k,mode,presence,quantity,location,n_records")?;
    for r in rows {
        let a = r.accuracy;
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{}",
            r.k, r.mode, a.presence, a.quantity, a.location, r.n_records
        )?;
    }
    Ok(())
}

pub fn write_random_vs_similar(
    out: &mut (impl Write + ?Sized),
    p: &PairedAccuracy,
) -> std::io::Result<()> {
    writeln!(out, "task,k,similar,random,difference,n_records")?;
    for t in Task::ALL {
        let (s, r) = (p.similar.get(t), p.random.get(t));
        writeln!(
            out,
            "{},{},{s:.6},{r:.6},{:.6},{}",
            t.as_str(),
            p.k,
            s - r,
            p.n_records
        )?;
    }
    Ok(())
}

pub fn write_leave_one_out(
    out: &mut (impl Write + ?Sized),
    rows: &[LeaveOneOutRow],
) -> std::io::Result<()> {
    writeln!(
        out,
        "city,n_records,n_references,presence,quantity,location"
    )?;
    for r in rows {
        let a = r.accuracy;
        let city = if r.city.contains([',', '"']) {
            format!("\"{}\"", r.city.replace('"', "\"\""))
        } else {
            r.city.clone()
        };
        writeln!(
            out,
            "{city},{},{},{:.6},{:.6},{:.6}",
            r.n_records, r.n_references, a.presence, a.quantity, a.location
        )?;
    }
    Ok(())
}

/// Writes prediction lines as JSON lines.
pub fn write_predictions(
    out: &mut (impl Write + ?Sized),
    lines: &[PredictionLine],
) -> std::io::Result<()> {
    for l in lines {
        serde_json::to_writer(&mut *out, l)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
