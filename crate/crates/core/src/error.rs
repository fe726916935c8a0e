use std::path::PathBuf;

use thiserror::Error;

use crate::compartment::Compartment;

/// Invalid or inconsistent model configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter `{0}` has no default stratification rule")]
    MissingDefaultRule(String),
    #[error("attribute `{attribute}` required by a `{parameter}` rule is missing")]
    MissingAttribute { parameter: String, attribute: String },
    #[error("{0}")]
    Invalid(String),
}

/// Failure while reading an input data file (population, tessellation, OD, graph).
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}:{line}: {message}")]
    Schema {
        file: String,
        line: u64,
        message: String,
    },
    #[error("no agents")]
    NoAgents,
    #[error("OD level {level}: row {origin} sums to {sum}")]
    NonStochasticRow {
        level: usize,
        origin: String,
        sum: f64,
    },
    #[error("OD level {level}: {message}")]
    Od { level: usize, message: String },
    #[error("agent {agent}: dangling {context} reference `{id}`")]
    DanglingReference {
        agent: String,
        context: String,
        id: String,
    },
    #[error("tessellation: {0}")]
    Tessellation(String),
    #[error("graph: {0}")]
    Graph(String),
    #[error("population: {0}")]
    Population(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Runtime failure of a simulation or integration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("step size too large: dt * max outflow rate = {0} (must be < 1 for euler)")]
    StepSize(f64),
    #[error("non-finite value in {compartment} at step {step}")]
    NonFinite { step: usize, compartment: Compartment },
    #[error("agent {agent} is in compartment {compartment}, which is disabled at iteration {iteration}")]
    InconsistentState {
        iteration: u32,
        agent: usize,
        compartment: Compartment,
    },
    #[error("initial infected count is zero")]
    NoInitialInfected,
    #[error("{0}")]
    Invalid(String),
}

/// Trend file or aggregation failure.
#[derive(Debug, Error)]
pub enum TrendError {
    #[error("cannot aggregate an empty list of series")]
    Empty,
    #[error("heterogeneous series: scenario hashes {0:?}")]
    MismatchedHashes(Vec<String>),
    #[error("heterogeneous series: {0}")]
    Mismatched(String),
    #[error("malformed trend file: {0}")]
    Malformed(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Scenario file could not be turned into a runnable scenario.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {key}: {message}")]
    Parse {
        key: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Data(#[from] DataError),
}
