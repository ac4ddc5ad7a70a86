//! Feeder-level coupling of PV descriptor errors with AC power flow.
//!
//! A population of rooftop sites with true quantity intervals is perturbed
//! per assessment model at that model's quantity and location accuracies.
//! Capacities are aggregated per bus, scaled by one common factor so the
//! true fleet reaches the target penetration, and a 24-hour power-flow
//! sequence yields net load at the slack bus and bus voltages per model.

mod metrics;
mod profiles;
mod report;
mod run;
mod sites;

use thiserror::Error;

use crate::descriptor::DescriptorError;
use crate::grid::GridError;

pub use metrics::{mape, max_deviation, rmse, voltage_deviation};
pub use profiles::{load_profile, pv_profile, DayProfiles, TimeGrid};
pub use report::{
    emit_simulation_report, file_stem, format_metrics_table, write_metrics, write_netload,
};
pub use run::{
    aggregate_and_scale, compute_metrics, run_day_simulation, run_scenario, CapacityScaling,
    ModelCapacity, ModelMetrics, ScenarioConfig, ScenarioOutcome, SimulationResult, TRUE_MODEL,
};
pub use sites::{
    check_sites, inject_errors, load_sites, parse_synth_spec, read_sites, synthetic_sites,
    write_sites, ModelSpec, SiteRecord,
};

/// Overall accuracies used to calibrate the three default models:
/// `(name, quantity accuracy, location accuracy)`.
pub const DEFAULT_MODELS: [(&str, f64, f64); 3] = [
    ("rag", 0.862, 0.802),
    ("gpt-4o", 0.834, 0.795),
    ("gpt-5.2", 0.677, 0.710),
];

pub fn default_models() -> Vec<ModelSpec> {
    DEFAULT_MODELS
        .iter()
        .map(|(n, q, l)| ModelSpec::new(*n, *q, *l))
        .collect()
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("profile: {0}")]
    Profile(String),
    #[error("site file line {line}: {reason}")]
    SiteFormat { line: u64, reason: String },
    #[error("site {site} is on unknown bus {bus}")]
    UnknownBus { site: String, bus: u32 },
    #[error("site {site} is on bus {bus}, which has no electrical neighbors")]
    IsolatedBus { site: String, bus: u32 },
    #[error("cannot scale empty PV population")]
    EmptyPopulation,
    #[error("power flow for model {model} at step {step}: {source}")]
    PowerFlow {
        model: String,
        step: usize,
        #[source]
        source: GridError,
    },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
