//! Scenario files: one JSON document per experiment.
//!
//! ```json
//! {
//!   "model": { "testing": true, "lockdown": true, "death": true },
//!   "params": { "beta": 0.006, "sigma": 0.25, "gamma": 0.04 },
//!   "stratification": [],
//!   "contact_source": { "kind": "explicit", "generator": { "model": "erdos_renyi", "p_edge": 0.002 }, "n": 5000 },
//!   "schedule": [ { "start": 30, "end": 120, "toggles": { "lockdown": true } } ],
//!   "run": { "iterations": 180, "initial_infected": 0.001, "seed": 1, "seeds": 10 },
//!   "meanfield": { "fidelity": "diagram_consistent", "method": "rk4", "dt": 1.0 }
//! }
//! ```
//!
//! Every section is optional. Unset parameters are zero; mean-field runs
//! default to the diagram-consistent equations, rk4 and `dt = 1`. Paths are
//! relative to the scenario file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compartment::ModuleToggles;
use crate::engine::{validate_plan, ContactSource, Scenario, ScheduleWindow};
use crate::error::ScenarioError;
use crate::graph::{generate_graph, ContactGraph, GraphModel};
use crate::implicit::population::{load_population, ActivityRule, ImplicitOptions};
use crate::implicit::{default_activity_rules, synthetic_population, ImplicitWorld, SyntheticConfig};
use crate::meanfield::{Fidelity, Method, OdeModel};
use crate::params::{ParameterSet, StratificationRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub iterations: u32,
    /// Fraction of the population in `I` at iteration 0.
    pub initial_infected: f64,
    /// First seed; a sweep of `seeds` runs uses `seed..seed + seeds`.
    pub seed: u64,
    pub seeds: usize,
    /// Contact-phase threads per run.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            initial_infected: 1e-4,
            seed: 1,
            seeds: 1,
            threads: 1,
        }
    }
}

impl RunConfig {
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|k| self.seed + k).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeanFieldConfig {
    /// Population size; 1 gives fractions.
    pub n: f64,
    pub fidelity: Fidelity,
    pub method: Method,
    /// Step size; `1 / dt` must be a whole number of steps per iteration.
    pub dt: f64,
    /// System to integrate; by default the smallest one covering the
    /// enabled modules.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<OdeModel>,
}

impl Default for MeanFieldConfig {
    fn default() -> Self {
        Self {
            n: 1.0,
            fidelity: Fidelity::DiagramConsistent,
            method: Method::Rk4,
            dt: 1.0,
            model: None,
        }
    }
}

impl MeanFieldConfig {
    pub fn steps_per_iteration(&self) -> Result<usize, String> {
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return Err(format!("dt = {} must lie in (0, 1]", self.dt));
        }
        let steps = (1.0 / self.dt).round();
        if ((steps * self.dt) - 1.0).abs() > 1e-9 {
            return Err(format!("1 / dt = {} is not a whole number of steps", 1.0 / self.dt));
        }
        Ok(steps as usize)
    }

    fn violations(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if let Err(e) = self.steps_per_iteration() {
            errors.push(e);
        }
        if !(self.n > 0.0 && self.n.is_finite()) {
            errors.push(format!("meanfield n = {} must be positive", self.n));
        }
        errors
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    /// A stored graph: generated (`generator` and `n`) or loaded from an
    /// edge list with an optional node attribute table.
    Explicit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        generator: Option<GraphModel>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
        #[serde(default = "one")]
        graph_seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        edges: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nodes: Option<PathBuf>,
        /// Activity rate `a_v` of every node; otherwise 1, or the node
        /// table's values for loaded graphs.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        activation: Option<f64>,
    },
    /// Contacts drawn from social contexts: population files or a
    /// synthetic population.
    Implicit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        population: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tessellation: Option<PathBuf>,
        #[serde(default)]
        od: Vec<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        synthetic: Option<SyntheticConfig>,
        /// Defaults to the built-in age profile for synthetic populations.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        activity_rules: Option<Vec<ActivityRule>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lockdown_contexts: Option<Vec<String>>,
        #[serde(default)]
        od_level: usize,
    },
}

fn one() -> u64 {
    1
}

impl SourceConfig {
    /// Loads or generates the contact source; relative paths resolve
    /// against `base`.
    pub fn build(&self, base: &Path) -> Result<ContactSource, ScenarioError> {
        let invalid = |msg: &str| ScenarioError::Invalid(vec![format!("contact_source: {msg}")]);
        match self {
            SourceConfig::Explicit {
                generator,
                n,
                graph_seed,
                edges,
                nodes,
                activation,
            } => {
                if let Some(a) = activation.filter(|a| !(0.0..=1.0).contains(a)) {
                    return Err(invalid(&format!("activation {a} not in [0, 1]")));
                }
                let mut graph: ContactGraph = match (generator, n, edges) {
                    (Some(model), Some(n), None) => generate_graph(*model, *n, *graph_seed)
                        .map_err(|e| invalid(&e.to_string()))?,
                    (None, _, Some(path)) => {
                        let nodes = nodes.as_ref().map(|p| base.join(p));
                        ContactGraph::load(&base.join(path), nodes.as_deref())?
                    }
                    _ => return Err(invalid("give either generator and n, or edges")),
                };
                if let Some(a) = activation {
                    graph.set_all_activations(*a);
                }
                Ok(graph.into())
            }
            SourceConfig::Implicit {
                population,
                tessellation,
                od,
                synthetic,
                activity_rules,
                lockdown_contexts,
                od_level,
            } => {
                let (agents, tess, od, default_rules) = match (synthetic, population, tessellation) {
                    (Some(cfg), None, None) => {
                        let (agents, tess, od) = synthetic_population(cfg);
                        (agents, tess, od, default_activity_rules())
                    }
                    (None, Some(pop), Some(tess)) => {
                        let od: Vec<PathBuf> = od.iter().map(|p| base.join(p)).collect();
                        let (agents, tess, od) = load_population(&base.join(pop), &base.join(tess), &od)?;
                        (agents, tess, od, Vec::new())
                    }
                    _ => return Err(invalid("give either synthetic, or population and tessellation")),
                };
                let options = ImplicitOptions {
                    activity_rules: activity_rules.clone().unwrap_or(default_rules),
                    lockdown_contexts: lockdown_contexts.clone(),
                    od_level: *od_level,
                };
                Ok(ImplicitWorld::build(agents, tess, od, &options)?.into())
            }
        }
    }
}

/// The document as written, before any data is loaded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModuleToggles,
    pub params: ParameterSet,
    pub stratification: Vec<StratificationRule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contact_source: Option<SourceConfig>,
    pub schedule: Vec<ScheduleWindow>,
    pub run: RunConfig,
    pub meanfield: MeanFieldConfig,
}

impl ScenarioConfig {
    /// Parses JSON; errors name the offending key and position.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let inner = e.into_inner();
            let (line, column) = (inner.line(), inner.column());
            let full = inner.to_string();
            let message = full
                .strip_suffix(&format!(" at line {line} column {column}"))
                .unwrap_or(&full)
                .to_string();
            ScenarioError::Parse {
                key,
                line,
                column,
                message,
            }
        })
    }

    /// Short content hash of the normalised document.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Base parameters with default stratification rules folded in.
    pub fn base_params(&self) -> ParameterSet {
        let mut params = self.params;
        for rule in self.stratification.iter().filter(|r| r.is_default()) {
            params.set(rule.parameter, rule.value);
        }
        params
    }

    /// Every semantic problem that does not need the contact data.
    pub fn violations(&self) -> Vec<String> {
        let mut errors = validate_plan(
            &self.model,
            &self.base_params(),
            &self.stratification,
            &self.schedule,
            self.run.iterations,
            self.run.initial_infected,
        );
        errors.extend(self.meanfield.violations());
        if self.run.seeds == 0 {
            errors.push("run.seeds must be at least 1".into());
        }
        if self.run.threads == 0 {
            errors.push("run.threads must be at least 1".into());
        }
        errors
    }
}

/// A parsed and validated scenario file.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ScenarioConfig,
    pub hash: String,
    /// Present when the file declares a contact source.
    pub scenario: Option<Scenario>,
}

impl Experiment {
    /// The agent-mode scenario, or a validation error when the file has no
    /// contact source.
    pub fn agent_scenario(&self) -> Result<&Scenario, ScenarioError> {
        self.scenario
            .as_ref()
            .ok_or_else(|| ScenarioError::Invalid(vec!["contact_source is required for agent runs".into()]))
    }
}

/// Reads, validates and loads everything a scenario file refers to.
pub fn parse_scenario(path: &Path) -> Result<Experiment, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_scenario_str(&text, base)
}

pub fn parse_scenario_str(text: &str, base: &Path) -> Result<Experiment, ScenarioError> {
    let config = ScenarioConfig::from_json(text)?;
    let errors = config.violations();
    if !errors.is_empty() {
        return Err(ScenarioError::Invalid(errors));
    }
    let hash = config.hash();
    let scenario = match &config.contact_source {
        None => None,
        Some(source) => {
            let source = source.build(base)?;
            let scenario = Scenario {
                toggles: config.model,
                params: config.base_params(),
                stratification: config.stratification.clone(),
                source: Arc::new(source),
                initial_infected: config.run.initial_infected,
                iterations: config.run.iterations,
                schedule: config.schedule.clone(),
                hash: hash.clone(),
            };
            scenario.validate().map_err(ScenarioError::Invalid)?;
            // Unknown attributes in stratification predicates surface here.
            crate::engine::check_stratification(&scenario)
                .map_err(|e| ScenarioError::Invalid(vec![e.to_string()]))?;
            Some(scenario)
        }
    };
    Ok(Experiment { config, hash, scenario })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compartment::Compartment;

    #[test]
    fn minimal_seir() {
        let text = r#"{
            "params": { "beta": 0.02, "sigma": 0.2, "gamma": 0.03 },
            "contact_source": { "kind": "explicit", "generator": { "model": "erdos_renyi", "p_edge": 0.002 }, "n": 5000 },
            "run": { "iterations": 300 }
        }"#;
        let exp = parse_scenario_str(text, Path::new(".")).unwrap();
        let scenario = exp.scenario.unwrap();
        assert_eq!(scenario.toggles, ModuleToggles::default());
        assert_eq!(scenario.agent_count(), 5000);
        assert_eq!(scenario.iterations, 300);
        assert_eq!(scenario.params.beta, 0.02);
        assert_eq!(exp.config.meanfield.fidelity, Fidelity::DiagramConsistent);
        assert_eq!(exp.config.meanfield.method, Method::Rk4);
        assert_eq!(exp.config.meanfield.dt, 1.0);
        assert_eq!(
            scenario.active_compartments(),
            vec![Compartment::S, Compartment::E, Compartment::I, Compartment::R]
        );
    }

    #[test]
    fn malformed_value_names_the_key() {
        let text = "{\n  \"params\": {\n    \"beta\": \"abc\"\n  }\n}";
        match parse_scenario_str(text, Path::new(".")).unwrap_err() {
            ScenarioError::Parse { key, line, .. } => {
                assert_eq!(key, "params.beta");
                assert_eq!(line, 3);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_scenario_str(r#"{"params": {"betta": 0.1}}"#, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("betta"), "{err}");
    }

    #[test]
    fn tuscany_style_config() {
        let text = r#"{
            "model": { "testing": true, "lockdown": true, "death": true, "icu": true },
            "params": { "beta": 0.006, "sigma": 0.25, "gamma": 0.04, "gamma_t": 0.04,
                        "theta_i": 0.1, "kappa_i": 0.1, "omega": 0.001, "omega_t": 0.0015,
                        "p": 0.008, "iota": 0.2, "tau": 0.9, "b": 20 },
            "schedule": [ { "start": 30, "end": 120, "toggles": { "lockdown": true } } ],
            "run": { "iterations": 180, "initial_infected": 0.001 }
        }"#;
        let exp = parse_scenario_str(text, Path::new(".")).unwrap();
        assert!(exp.scenario.is_none());
        assert_eq!(exp.config.schedule[0].start, 30);
        assert!(exp.agent_scenario().is_err());
    }

    #[test]
    fn semantic_errors_are_collected() {
        let text = r#"{
            "model": { "icu": true },
            "params": { "beta": 1.5, "gamma": -1 },
            "meanfield": { "dt": 0.3 }
        }"#;
        match parse_scenario_str(text, Path::new(".")).unwrap_err() {
            ScenarioError::Invalid(errors) => assert!(errors.len() >= 4, "{errors:?}"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn hash_ignores_formatting() {
        let a = ScenarioConfig::from_json(r#"{"params":{"beta":0.1}}"#).unwrap();
        let b = ScenarioConfig::from_json("{ \"params\" : { \"beta\" : 1e-1 } }").unwrap();
        let c = ScenarioConfig::from_json(r#"{"params":{"beta":0.2}}"#).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn default_rules_fold_into_params() {
        let text = r#"{
            "model": { "lockdown": true },
            "params": { "tau": 0.5 },
            "stratification": [
                { "parameter": "tau", "value": 0.9 },
                { "parameter": "tau", "when": [ { "attribute": "employment", "op": "==", "value": "health_worker" } ], "value": 0.0 }
            ]
        }"#;
        let cfg = ScenarioConfig::from_json(text).unwrap();
        assert_eq!(cfg.base_params().tau, 0.9);
        assert!(cfg.violations().is_empty());
    }
}
