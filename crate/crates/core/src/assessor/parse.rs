//! Extraction of descriptors from free-form model output.
//!
//! Lenient on wrappers (prose, code fences, an enclosing object), strict on
//! vocabulary: every field value must map onto a canonical token.

use serde_json::{Map, Value};
use thiserror::Error;

use crate::descriptor::{
    parse_presence, DescriptorError, LocationLabel, PvDescriptor, QuantityInterval, Violation,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OutputError {
    #[error("no parsable descriptor object in model output")]
    Parse,
    #[error("unknown {field} value {token:?}")]
    Vocabulary { field: &'static str, token: String },
    #[error("inconsistent descriptor: {0}")]
    Consistency(Violation),
}

impl From<DescriptorError> for OutputError {
    fn from(e: DescriptorError) -> Self {
        match e {
            DescriptorError::Vocabulary { field, token } => {
                OutputError::Vocabulary { field, token }
            }
            _ => OutputError::Parse,
        }
    }
}

fn get_ci<'a>(obj: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    obj.iter()
        .find(|(k, _)| k.trim().eq_ignore_ascii_case(key))
        .map(|(_, v)| v)
}

fn is_descriptor(obj: &Map<String, Value>) -> bool {
    get_ci(obj, "presence").is_some()
}

/// Returns the descriptor-shaped object itself or one nested a level down.
fn descriptor_object(obj: &Map<String, Value>) -> Option<&Map<String, Value>> {
    if is_descriptor(obj) {
        return Some(obj);
    }
    obj.values().find_map(|v| match v {
        Value::Object(inner) if is_descriptor(inner) => Some(inner),
        _ => None,
    })
}

fn token(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn field_str<'a>(obj: &'a Map<String, Value>, field: &'static str) -> Result<&'a str, OutputError> {
    match get_ci(obj, field) {
        Some(Value::String(s)) => Ok(s),
        Some(other) => Err(OutputError::Vocabulary {
            field,
            token: token(other),
        }),
        None => Err(OutputError::Parse),
    }
}

fn descriptor_from(obj: &Map<String, Value>) -> Result<PvDescriptor, OutputError> {
    let presence = match get_ci(obj, "presence") {
        Some(Value::Bool(b)) => *b,
        Some(Value::String(s)) => parse_presence(s)?,
        Some(other) => {
            return Err(OutputError::Vocabulary {
                field: "presence",
                token: token(other),
            })
        }
        None => return Err(OutputError::Parse),
    };
    let quantity: QuantityInterval = field_str(obj, "quantity")?.parse()?;
    let location: LocationLabel = field_str(obj, "location")?.parse()?;
    let explanation = match get_ci(obj, "explanation") {
        Some(Value::String(s)) => s.trim().to_string(),
        Some(Value::Null) | None => String::new(),
        Some(other) => other.to_string(),
    };
    let d = PvDescriptor {
        presence,
        quantity,
        location,
        explanation,
    };
    d.validate_backend_output()
        .map_err(OutputError::Consistency)?;
    Ok(d)
}

/// Parses the first well-formed JSON object carrying descriptor fields.
pub fn parse_structured_output(raw: &str) -> Result<PvDescriptor, OutputError> {
    for (start, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(obj))) = stream.next() {
            if let Some(d) = descriptor_object(&obj) {
                return descriptor_from(d);
            }
        }
    }
    Err(OutputError::Parse)
}
