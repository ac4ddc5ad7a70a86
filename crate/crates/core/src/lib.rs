//! Rooftop PV retrieval, reference-assisted assessment, evaluation and
//! distribution-grid coupling simulation.

pub mod assessor;
pub mod cli;
pub mod dataset;
pub mod descriptor;
pub mod evaluation;
pub mod grid;
pub mod index;
pub mod pipeline;
pub mod rng;
pub mod sim;
