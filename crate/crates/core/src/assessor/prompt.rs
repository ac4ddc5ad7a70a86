//! Prompt templates and prompt assembly.
//!
//! Wording lives in plain-text templates with `{name}` placeholders; only the
//! structure is fixed in code. Templates are checked for their required
//! placeholders when loaded, so a broken template fails at startup rather
//! than mid-run.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::descriptor::presence_str;
use crate::index::ReferenceEntry;

const DEFAULT_AUTOLABEL: &str = include_str!("../../templates/autolabel.txt");
const DEFAULT_RAG: &str = include_str!("../../templates/rag.txt");
const DEFAULT_REFERENCE: &str = include_str!("../../templates/reference.txt");
const DEFAULT_QUERY: &str = include_str!("../../templates/query.txt");
const DEFAULT_SCHEMA: &str = include_str!("../../templates/output_schema.txt");

/// Descriptor field names every output schema must mention.
pub const DESCRIPTOR_FIELDS: [&str; 4] = ["presence", "quantity", "location", "explanation"];

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {template} is missing placeholder {{{placeholder}}}")]
    MissingPlaceholder {
        template: &'static str,
        placeholder: &'static str,
    },
    #[error("output schema does not mention field {0:?}")]
    SchemaMissingField(&'static str),
    #[error("RAG prompt requires references")]
    NoReferences,
    #[error("references must be sorted by descending similarity (position {0})")]
    Unsorted(usize),
    #[error("reading template {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// The five prompt building blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    autolabel: String,
    rag: String,
    reference: String,
    query: String,
    output_schema: String,
}

const REQUIRED: [(&str, &[&str]); 4] = [
    ("autolabel.txt", &["query_id", "output_schema"]),
    ("rag.txt", &["references", "query_block"]),
    (
        "reference.txt",
        &[
            "rank",
            "city",
            "similarity",
            "presence",
            "quantity",
            "location",
            "explanation",
        ],
    ),
    ("query.txt", &["query_id", "output_schema"]),
];

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates::new(
            DEFAULT_AUTOLABEL,
            DEFAULT_RAG,
            DEFAULT_REFERENCE,
            DEFAULT_QUERY,
            DEFAULT_SCHEMA,
        )
        .expect("built-in templates are valid")
    }
}

impl PromptTemplates {
    pub fn new(
        autolabel: &str,
        rag: &str,
        reference: &str,
        query: &str,
        output_schema: &str,
    ) -> Result<Self, PromptError> {
        let t = PromptTemplates {
            autolabel: autolabel.to_string(),
            rag: rag.to_string(),
            reference: reference.to_string(),
            query: query.to_string(),
            output_schema: output_schema.trim_end().to_string(),
        };
        t.validate()?;
        Ok(t)
    }

    /// Loads `autolabel.txt`, `rag.txt`, `reference.txt`, `query.txt` and
    /// `output_schema.txt` from `dir`. Files that are absent fall back to the
    /// built-in defaults; files that are present must be valid.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let read = |name: &str, default: &str| -> Result<String, PromptError> {
            let path = dir.join(name);
            if !path.exists() {
                return Ok(default.to_string());
            }
            std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        PromptTemplates::new(
            &read("autolabel.txt", DEFAULT_AUTOLABEL)?,
            &read("rag.txt", DEFAULT_RAG)?,
            &read("reference.txt", DEFAULT_REFERENCE)?,
            &read("query.txt", DEFAULT_QUERY)?,
            &read("output_schema.txt", DEFAULT_SCHEMA)?,
        )
    }

    fn validate(&self) -> Result<(), PromptError> {
        let bodies = [&self.autolabel, &self.rag, &self.reference, &self.query];
        for ((template, required), body) in REQUIRED.iter().zip(bodies) {
            for placeholder in required.iter() {
                if !body.contains(&format!("{{{placeholder}}}")) {
                    return Err(PromptError::MissingPlaceholder {
                        template,
                        placeholder,
                    });
                }
            }
        }
        for field in DESCRIPTOR_FIELDS {
            if !self.output_schema.contains(field) {
                return Err(PromptError::SchemaMissingField(field));
            }
        }
        Ok(())
    }

    pub fn output_schema(&self) -> &str {
        &self.output_schema
    }

    /// Prompt for labeling a single image without references.
    pub fn build_autolabel_prompt(&self, query_id: &str) -> String {
        render(
            &self.autolabel,
            &[
                ("query_id", query_id),
                ("output_schema", &self.output_schema),
            ],
        )
    }

    /// Prompt with one block per reference (in the given order) followed by
    /// the query instruction block.
    pub fn build_rag_prompt(
        &self,
        query_id: &str,
        references: &[(ReferenceEntry, f64)],
    ) -> Result<String, PromptError> {
        if references.is_empty() {
            return Err(PromptError::NoReferences);
        }
        if let Some(pos) = references.windows(2).position(|w| w[0].1 < w[1].1) {
            return Err(PromptError::Unsorted(pos + 1));
        }
        let blocks: Vec<String> = references
            .iter()
            .enumerate()
            .map(|(i, (entry, sim))| {
                let rank = (i + 1).to_string();
                let sim = format!("{sim:.4}");
                let label = &entry.label;
                let explanation = if label.explanation.is_empty() {
                    "-"
                } else {
                    label.explanation.as_str()
                };
                render(
                    &self.reference,
                    &[
                        ("rank", &rank),
                        ("city", &entry.city),
                        ("similarity", &sim),
                        ("presence", presence_str(label.presence)),
                        ("quantity", label.quantity.as_str()),
                        ("location", label.location.as_str()),
                        ("explanation", explanation),
                    ],
                )
                .trim_end()
                .to_string()
            })
            .collect();
        let query_block = render(
            &self.query,
            &[
                ("query_id", query_id),
                ("output_schema", &self.output_schema),
            ],
        );
        Ok(render(
            &self.rag,
            &[
                ("references", &blocks.join("\n\n")),
                ("query_block", query_block.trim_end()),
            ],
        ))
    }
}

/// Single-pass `{name}` substitution. Unknown placeholders and other braces
/// are copied through; substituted values are not rescanned.
fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let vars: HashMap<&str, &str> = vars.iter().copied().collect();
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_end = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        if after[name_end..].starts_with('}') {
            if let Some(value) = vars.get(&after[..name_end]) {
                out.push_str(value);
                rest = &after[name_end + 1..];
                continue;
            }
        }
        out.push('{');
        rest = after;
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{LocationLabel, PvDescriptor, QuantityInterval};
    use crate::index::Embedding;

    fn reference(id: &str, city: &str, label: PvDescriptor) -> ReferenceEntry {
        ReferenceEntry {
            id: id.into(),
            city: city.into(),
            continent: "X".into(),
            embedding: Embedding::new(vec![1.0, 0.0]).unwrap(),
            label,
        }
    }

    fn three_refs() -> Vec<(ReferenceEntry, f64)> {
        vec![
            (
                reference(
                    "r1",
                    "Tempe",
                    PvDescriptor::present(QuantityInterval::TenPlus, LocationLabel::Bottom, "big"),
                ),
                1.0,
            ),
            (
                reference("r2", "Orlando", PvDescriptor::absent("")),
                0.71234,
            ),
            (
                reference(
                    "r3",
                    "Seattle",
                    PvDescriptor::present(
                        QuantityInterval::OneToFive,
                        LocationLabel::TopLeft,
                        "small",
                    ),
                ),
                0.5,
            ),
        ]
    }

    #[test]
    fn autolabel_mentions_all_fields_and_is_deterministic() {
        let t = PromptTemplates::default();
        let p = t.build_autolabel_prompt("img-42");
        for f in DESCRIPTOR_FIELDS {
            assert!(p.contains(&format!("\"{f}\"")), "missing {f}");
        }
        assert!(p.contains(t.output_schema()));
        assert!(p.contains("img-42"));
        assert_eq!(p, t.build_autolabel_prompt("img-42"));
    }

    #[test]
    fn missing_placeholder_is_a_config_error() {
        let err = PromptTemplates::new(
            "no placeholders here {query_id}",
            DEFAULT_RAG,
            DEFAULT_REFERENCE,
            DEFAULT_QUERY,
            DEFAULT_SCHEMA,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            PromptError::MissingPlaceholder {
                template: "autolabel.txt",
                placeholder: "output_schema"
            }
        ));
        let err = PromptTemplates::new(
            DEFAULT_AUTOLABEL,
            DEFAULT_RAG,
            DEFAULT_REFERENCE,
            DEFAULT_QUERY,
            "presence quantity location",
        )
        .unwrap_err();
        assert!(matches!(
            err,
            PromptError::SchemaMissingField("explanation")
        ));
    }

    #[test]
    fn rag_prompt_structure() {
        let t = PromptTemplates::default();
        let refs = three_refs();
        let p = t.build_rag_prompt("q-1", &refs).unwrap();
        assert_eq!(p.matches("Reference ").count(), 3);
        let pos: Vec<usize> = ["Tempe", "Orlando", "Seattle"]
            .iter()
            .map(|c| p.find(c).unwrap())
            .collect();
        assert!(pos[0] < pos[1] && pos[1] < pos[2]);
        assert!(p.contains("similarity: 1.0000"));
        assert!(p.contains("similarity: 0.7123"));
        assert!(p.contains("quantity: (10,inf)"));
        assert!(p.contains("location: top-left"));
        assert!(p.find("Tempe").unwrap() < p.find("q-1").unwrap());
        assert_eq!(p, t.build_rag_prompt("q-1", &refs).unwrap());
    }

    #[test]
    fn rag_prompt_errors() {
        let t = PromptTemplates::default();
        let err = t.build_rag_prompt("q", &[]).unwrap_err();
        assert_eq!(err.to_string(), "RAG prompt requires references");
        let mut refs = three_refs();
        refs.swap(0, 2);
        assert!(matches!(
            t.build_rag_prompt("q", &refs),
            Err(PromptError::Unsorted(1))
        ));
    }

    #[test]
    fn render_leaves_unknown_braces() {
        let s = render("{a} {b} {{x}} {", &[("a", "{b}")]);
        assert_eq!(s, "{b} {b} {{x}} {");
    }
}
