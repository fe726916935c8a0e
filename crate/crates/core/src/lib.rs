pub mod compartment;
pub mod config;
pub mod engine;
pub mod error;
pub mod graph;
pub mod implicit;
pub mod meanfield;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod sweep;
pub mod trend;

pub use compartment::{allowed_transitions, Compartment, MetaClass, ModuleToggles, TransitionRate};
pub use engine::{
    audit_trace, run, run_with, AuditReport, Cause, ContactSource, RunOptions, RunOutput, Scenario, ScheduleWindow,
    Simulation, TraceRecord,
};
pub use config::{parse_scenario, parse_scenario_str, Experiment, ScenarioConfig};
pub use error::{ConfigError, DataError, ScenarioError, SimError, TrendError};
pub use graph::{generate_graph, sample_contacts, ContactGraph, GraphModel};
pub use implicit::{ImplicitWorld, Tessellation};
pub use meanfield::{derivatives, integrate, Fidelity, MeanFieldState, Method, OdeModel, OdeVariant, Trajectory};
pub use params::{resolve_param, validate_model, AttrTest, AttrValue, Attributes, Comparator, ParamName, ParameterSet, StratificationRule};
pub use scalar::Scalar;
pub use sweep::{run_meanfield, run_seeds, MeanFieldOutput, MeanFieldPlan};
pub use trend::{aggregate_runs, emit_trends, parse_trends, read_trends, render, Format, TrendDocument, TrendSeries};

pub type MeanFieldState64 = MeanFieldState<f64>;
pub type MeanFieldState32 = MeanFieldState<f32>;
pub type Trajectory64 = Trajectory<f64>;
pub type Trajectory32 = Trajectory<f32>;
