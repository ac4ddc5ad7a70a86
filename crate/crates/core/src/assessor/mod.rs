//! Reference-assisted descriptor estimation.
//!
//! An assessment retrieves references for the query (nearest neighbors, a
//! random draw, or none), renders the prompt, calls the backend once with
//! bounded retries on transport failures, and parses the reply into a
//! validated descriptor.

pub mod backend;
pub mod parse;
pub mod prompt;

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::descriptor::PvDescriptor;
use crate::index::{Embedding, EntryFilter, IndexError, ReferenceEntry, VectorIndex};

pub use backend::{
    AssessmentBackend, BackendError, ImageRef, MockBackend, RemoteBackend, RemoteConfig,
    RetryPolicy,
};
pub use parse::{parse_structured_output, OutputError};
pub use prompt::{PromptError, PromptTemplates};

/// How references are chosen for a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssessmentMode {
    /// Query image only.
    Plain,
    /// The `k` nearest references.
    Rag { k: usize },
    /// `k` references drawn uniformly at random.
    Random { k: usize, seed: u64 },
}

impl AssessmentMode {
    /// K = 0 means no references.
    pub fn rag(k: usize) -> Self {
        if k == 0 {
            AssessmentMode::Plain
        } else {
            AssessmentMode::Rag { k }
        }
    }

    pub fn k(&self) -> usize {
        match self {
            AssessmentMode::Plain => 0,
            AssessmentMode::Rag { k } | AssessmentMode::Random { k, .. } => *k,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AssessmentMode::Plain => "plain",
            AssessmentMode::Rag { .. } => "rag",
            AssessmentMode::Random { .. } => "random",
        }
    }
}

/// Everything the backend sees for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentRequest {
    pub query_id: String,
    pub mode: AssessmentMode,
    pub query_image: Option<ImageRef>,
    /// Sorted by descending similarity; empty in PLAIN mode.
    pub references: Vec<(ReferenceEntry, f64)>,
    pub reference_images: Vec<ImageRef>,
    pub prompt_text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentResult {
    pub query_id: String,
    pub descriptor: PvDescriptor,
    pub raw_output: String,
    pub backend_name: String,
    pub latency_ms: u128,
    /// Ids of the references shown to the backend, most similar first.
    pub reference_ids: Vec<String>,
}

#[derive(Debug, Error)]
pub enum AssessError {
    #[error("retrieval for {query_id}: {source}")]
    Retrieval {
        query_id: String,
        #[source]
        source: IndexError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("backend failed for {query_id} after {attempts} attempt(s): {source}")]
    Backend {
        query_id: String,
        attempts: u32,
        #[source]
        source: BackendError,
    },
    #[error("unusable output for {query_id}: {source}")]
    Output {
        query_id: String,
        raw_output: String,
        #[source]
        source: OutputError,
    },
}

/// A query image to assess.
#[derive(Debug, Clone)]
pub struct Query<'a> {
    pub id: &'a str,
    pub embedding: &'a Embedding,
    pub image: Option<ImageRef>,
}

/// Runs assessments against one reference index and backend.
pub struct Assessor<'a> {
    index: &'a VectorIndex,
    backend: &'a dyn AssessmentBackend,
    templates: PromptTemplates,
    retry: RetryPolicy,
    leave_out_city: Option<String>,
    reference_images: Option<&'a HashMap<String, ImageRef>>,
}

impl<'a> Assessor<'a> {
    pub fn new(index: &'a VectorIndex, backend: &'a dyn AssessmentBackend) -> Self {
        Assessor {
            index,
            backend,
            templates: PromptTemplates::default(),
            retry: RetryPolicy::default(),
            leave_out_city: None,
            reference_images: None,
        }
    }

    pub fn with_templates(mut self, templates: PromptTemplates) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Excludes every reference from `city` (cross-regional validation).
    pub fn leave_out_city(mut self, city: Option<String>) -> Self {
        self.leave_out_city = city;
        self
    }

    pub fn with_reference_images(mut self, images: &'a HashMap<String, ImageRef>) -> Self {
        self.reference_images = Some(images);
        self
    }

    fn filter_for(&self, query_id: &str) -> EntryFilter {
        // A query is never its own reference.
        let f = EntryFilter::none().excluding_id(query_id);
        match &self.leave_out_city {
            Some(city) => f.excluding_city(city.clone()),
            None => f,
        }
    }

    /// References for `query` under `mode`, most similar first.
    pub fn references(
        &self,
        query: &Query<'_>,
        mode: AssessmentMode,
    ) -> Result<Vec<(ReferenceEntry, f64)>, IndexError> {
        let filter = self.filter_for(query.id);
        match mode {
            AssessmentMode::Plain => Ok(Vec::new()),
            AssessmentMode::Rag { k } => Ok(self
                .index
                .search_topk(query.embedding, k, &filter)?
                .into_iter()
                .map(|h| (h.entry, h.similarity))
                .collect()),
            AssessmentMode::Random { k, seed } => {
                let picked = self
                    .index
                    .random_sample(k, query_seed(seed, query.id), &filter)?;
                let q = query.embedding.normalize()?;
                let mut scored = picked
                    .into_iter()
                    .map(|e| Ok((e.clone(), q.similarity(&e.embedding)?)))
                    .collect::<Result<Vec<_>, IndexError>>()?;
                scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.id.cmp(&b.0.id)));
                Ok(scored)
            }
        }
    }

    /// Builds the request that would be sent for `query`.
    pub fn request(
        &self,
        query: &Query<'_>,
        mode: AssessmentMode,
    ) -> Result<AssessmentRequest, AssessError> {
        let references = self
            .references(query, mode)
            .map_err(|source| AssessError::Retrieval {
                query_id: query.id.to_string(),
                source,
            })?;
        let prompt_text = if references.is_empty() {
            self.templates.build_autolabel_prompt(query.id)
        } else {
            self.templates.build_rag_prompt(query.id, &references)?
        };
        let reference_images = match self.reference_images {
            Some(map) => references
                .iter()
                .filter_map(|(e, _)| map.get(&e.id).cloned())
                .collect(),
            None => Vec::new(),
        };
        Ok(AssessmentRequest {
            query_id: query.id.to_string(),
            mode,
            query_image: query.image.clone(),
            references,
            reference_images,
            prompt_text,
        })
    }

    pub fn assess(
        &self,
        query: &Query<'_>,
        mode: AssessmentMode,
    ) -> Result<AssessmentResult, AssessError> {
        let request = self.request(query, mode)?;
        let started = Instant::now();
        let (reply, attempts) = self.retry.call(self.backend, &request);
        let raw_output = reply.map_err(|source| AssessError::Backend {
            query_id: query.id.to_string(),
            attempts,
            source,
        })?;
        let latency_ms = started.elapsed().as_millis();
        let descriptor = match parse_structured_output(&raw_output) {
            Ok(d) => d,
            Err(source) => {
                return Err(AssessError::Output {
                    query_id: query.id.to_string(),
                    raw_output,
                    source,
                })
            }
        };
        Ok(AssessmentResult {
            query_id: query.id.to_string(),
            descriptor,
            raw_output,
            backend_name: self.backend.name().to_string(),
            latency_ms,
            reference_ids: request
                .references
                .iter()
                .map(|(e, _)| e.id.clone())
                .collect(),
        })
    }

    /// Assesses `queries` with at most `concurrency` requests in flight.
    /// Results come back in query order.
    pub fn assess_batch(
        &self,
        queries: &[Query<'_>],
        mode: AssessmentMode,
        concurrency: usize,
    ) -> Vec<Result<AssessmentResult, AssessError>> {
        let run = || -> Vec<_> { queries.par_iter().map(|q| self.assess(q, mode)).collect() };
        match rayon::ThreadPoolBuilder::new()
            .num_threads(concurrency.max(1))
            .build()
        {
            Ok(pool) => pool.install(run),
            Err(_) => queries.iter().map(|q| self.assess(q, mode)).collect(),
        }
    }
}

/// Per-query seed so each query draws its own random references.
pub fn query_seed(seed: u64, query_id: &str) -> u64 {
    crate::rng::mix(seed, crate::rng::fnv1a(query_id.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{LocationLabel, QuantityInterval};
    use std::sync::atomic::{AtomicU32, Ordering};

    fn entry(id: &str, city: &str, v: Vec<f32>, label: PvDescriptor) -> ReferenceEntry {
        ReferenceEntry {
            id: id.into(),
            city: city.into(),
            continent: "X".into(),
            embedding: Embedding::new(v).unwrap().normalize().unwrap(),
            label,
        }
    }

    fn pos(q: QuantityInterval, l: LocationLabel) -> PvDescriptor {
        PvDescriptor::present(q, l, "ref")
    }

    fn index() -> VectorIndex {
        let mut idx = VectorIndex::new(3);
        idx.insert(entry(
            "self",
            "A",
            vec![1.0, 0.0, 0.0],
            pos(QuantityInterval::TenPlus, LocationLabel::Top),
        ))
        .unwrap();
        idx.insert(entry(
            "n1",
            "A",
            vec![0.99, 0.1, 0.0],
            pos(QuantityInterval::OneToFive, LocationLabel::Left),
        ))
        .unwrap();
        idx.insert(entry(
            "n2",
            "B",
            vec![0.95, 0.3, 0.0],
            pos(QuantityInterval::OneToFive, LocationLabel::Right),
        ))
        .unwrap();
        idx.insert(entry(
            "n3",
            "B",
            vec![0.9, 0.0, 0.4],
            pos(QuantityInterval::FiveToTen, LocationLabel::Left),
        ))
        .unwrap();
        idx.insert(entry(
            "far",
            "C",
            vec![0.0, 0.0, 1.0],
            PvDescriptor::absent(""),
        ))
        .unwrap();
        idx
    }

    fn request_with(labels: Vec<PvDescriptor>) -> AssessmentRequest {
        let n = labels.len();
        AssessmentRequest {
            query_id: "q".into(),
            mode: AssessmentMode::Rag { k: n },
            query_image: None,
            references: labels
                .into_iter()
                .enumerate()
                .map(|(i, l)| {
                    (
                        entry(&format!("r{i}"), "X", vec![1.0], l),
                        1.0 - i as f64 * 0.1,
                    )
                })
                .collect(),
            reference_images: vec![],
            prompt_text: String::new(),
        }
    }

    #[test]
    fn rag_excludes_self() {
        let idx = index();
        let backend = MockBackend;
        let a = Assessor::new(&idx, &backend);
        let emb = idx.get("self").unwrap().embedding.clone();
        let q = Query {
            id: "self",
            embedding: &emb,
            image: None,
        };
        let r = a.assess(&q, AssessmentMode::Rag { k: 3 }).unwrap();
        assert_eq!(r.reference_ids, vec!["n1", "n2", "n3"]);
        // Majority present; quantity (1,5] twice; location tie -> most similar (left).
        assert_eq!(
            r.descriptor,
            PvDescriptor::present(
                QuantityInterval::OneToFive,
                LocationLabel::Left,
                "mock: majority of 3 references"
            )
        );
    }

    #[test]
    fn plain_mode_has_no_references() {
        let idx = index();
        let backend = MockBackend;
        let a = Assessor::new(&idx, &backend);
        let emb = idx.get("self").unwrap().embedding.clone();
        let q = Query {
            id: "self",
            embedding: &emb,
            image: None,
        };
        let req = a.request(&q, AssessmentMode::Plain).unwrap();
        assert!(req.references.is_empty());
        assert!(!req.prompt_text.contains("Reference 1"));
        let r = a.assess(&q, AssessmentMode::Plain).unwrap();
        assert!(!r.descriptor.presence);
    }

    #[test]
    fn leave_out_city_applies() {
        let idx = index();
        let backend = MockBackend;
        let a = Assessor::new(&idx, &backend).leave_out_city(Some("B".into()));
        let emb = idx.get("self").unwrap().embedding.clone();
        let q = Query {
            id: "self",
            embedding: &emb,
            image: None,
        };
        let req = a.request(&q, AssessmentMode::Rag { k: 3 }).unwrap();
        assert!(req
            .references
            .iter()
            .all(|(e, _)| e.city != "B" && e.id != "self"));
        assert_eq!(req.references.len(), 2);
    }

    #[test]
    fn random_and_rag_agree_when_k_saturates() {
        let idx = index();
        let backend = MockBackend;
        let a = Assessor::new(&idx, &backend);
        let emb = idx.get("far").unwrap().embedding.clone();
        let q = Query {
            id: "far",
            embedding: &emb,
            image: None,
        };
        let ids = |m| {
            let mut v: Vec<String> = a
                .references(&q, m)
                .unwrap()
                .into_iter()
                .map(|(e, _)| e.id)
                .collect();
            v.sort();
            v
        };
        assert_eq!(
            ids(AssessmentMode::Rag { k: 4 }),
            ids(AssessmentMode::Random { k: 4, seed: 9 })
        );
        let refs = a
            .references(&q, AssessmentMode::Random { k: 4, seed: 9 })
            .unwrap();
        assert!(refs.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn prompt_never_leaks_query_label() {
        let mut idx = index();
        idx.insert(entry(
            "leaky",
            "Z",
            vec![0.5, 0.5, 0.5],
            PvDescriptor::present(
                QuantityInterval::TenPlus,
                LocationLabel::BottomRight,
                "UNIQUE-LEAK-MARKER",
            ),
        ))
        .unwrap();
        let backend = MockBackend;
        let a = Assessor::new(&idx, &backend);
        let emb = idx.get("leaky").unwrap().embedding.clone();
        let q = Query {
            id: "leaky",
            embedding: &emb,
            image: None,
        };
        for mode in [
            AssessmentMode::Plain,
            AssessmentMode::Rag { k: 5 },
            AssessmentMode::Random { k: 5, seed: 1 },
        ] {
            let req = a.request(&q, mode).unwrap();
            assert!(!req.prompt_text.contains("UNIQUE-LEAK-MARKER"));
        }
    }

    #[test]
    fn mock_majority_rules() {
        let t = |q| pos(q, LocationLabel::Center);
        let f = || PvDescriptor::absent("");
        let parse =
            |r: &AssessmentRequest| parse_structured_output(&MockBackend::respond(r)).unwrap();

        let d = parse(&request_with(vec![
            t(QuantityInterval::OneToFive),
            t(QuantityInterval::OneToFive),
            f(),
        ]));
        assert!(d.presence);
        let d = parse(&request_with(vec![t(QuantityInterval::OneToFive), f()]));
        assert!(d.presence);
        let d = parse(&request_with(vec![f(), t(QuantityInterval::OneToFive)]));
        assert!(!d.presence);
        let d = parse(&request_with(vec![f(), f(), f()]));
        assert_eq!(d, PvDescriptor::absent("mock: majority of 3 references"));
        // Tied quantities resolve to the most similar agreeing reference.
        let d = parse(&request_with(vec![
            f(),
            t(QuantityInterval::TenPlus),
            t(QuantityInterval::ZeroToOne),
        ]));
        assert_eq!(d.quantity, QuantityInterval::TenPlus);
    }

    #[test]
    fn mock_is_pure() {
        let r = request_with(vec![
            pos(QuantityInterval::FiveToTen, LocationLabel::Top);
            3
        ]);
        assert_eq!(MockBackend::respond(&r), MockBackend::respond(&r.clone()));
    }

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
        reply: &'static str,
        transport: bool,
    }

    impl AssessmentBackend for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }
        fn complete(&self, _: &AssessmentRequest) -> Result<String, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                if self.transport {
                    Err(BackendError::Transport("connection reset".into()))
                } else {
                    Err(BackendError::Rejected {
                        status: 400,
                        body: "bad".into(),
                    })
                }
            } else {
                Ok(self.reply.to_string())
            }
        }
    }

    fn query_on(idx: &VectorIndex) -> (Embedding, &VectorIndex) {
        (idx.get("self").unwrap().embedding.clone(), idx)
    }

    #[test]
    fn transport_errors_are_retried() {
        let idx = index();
        let (emb, idx) = query_on(&idx);
        let ok =
            r#"{"presence": false, "quantity": "NA", "location": "NA", "explanation": "none"}"#;
        let b = Flaky {
            failures: 2,
            calls: AtomicU32::new(0),
            reply: ok,
            transport: true,
        };
        let a = Assessor::new(idx, &b).with_retry(RetryPolicy::no_delay(3));
        let q = Query {
            id: "self",
            embedding: &emb,
            image: None,
        };
        assert!(a.assess(&q, AssessmentMode::Plain).is_ok());
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);

        let b = Flaky {
            failures: 3,
            calls: AtomicU32::new(0),
            reply: ok,
            transport: true,
        };
        let a = Assessor::new(idx, &b).with_retry(RetryPolicy::no_delay(3));
        match a.assess(&q, AssessmentMode::Plain) {
            Err(AssessError::Backend { attempts: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_transport_and_parse_errors_are_not_retried() {
        let idx = index();
        let (emb, idx) = query_on(&idx);
        let q = Query {
            id: "self",
            embedding: &emb,
            image: None,
        };
        let b = Flaky {
            failures: 1,
            calls: AtomicU32::new(0),
            reply: "",
            transport: false,
        };
        let a = Assessor::new(idx, &b).with_retry(RetryPolicy::no_delay(3));
        assert!(matches!(
            a.assess(&q, AssessmentMode::Plain),
            Err(AssessError::Backend { attempts: 1, .. })
        ));
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);

        let b = Flaky {
            failures: 0,
            calls: AtomicU32::new(0),
            reply: "no json here",
            transport: true,
        };
        let a = Assessor::new(idx, &b).with_retry(RetryPolicy::no_delay(3));
        match a.assess(&q, AssessmentMode::Plain) {
            Err(AssessError::Output {
                raw_output,
                source: OutputError::Parse,
                ..
            }) => {
                assert_eq!(raw_output, "no json here")
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn batch_preserves_order() {
        let idx = index();
        let backend = MockBackend;
        let a = Assessor::new(&idx, &backend);
        let embs: Vec<(String, Embedding)> = idx
            .entries()
            .iter()
            .map(|e| (e.id.clone(), e.embedding.clone()))
            .collect();
        let queries: Vec<Query> = embs
            .iter()
            .map(|(id, e)| Query {
                id,
                embedding: e,
                image: None,
            })
            .collect();
        let out = a.assess_batch(&queries, AssessmentMode::Rag { k: 2 }, 4);
        let ids: Vec<String> = out.into_iter().map(|r| r.unwrap().query_id).collect();
        assert_eq!(ids, embs.iter().map(|(i, _)| i.clone()).collect::<Vec<_>>());
    }
}
