//! Discrete-time stochastic agent-based simulation.

mod icu;
mod schedule;
mod sim;
mod trace;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compartment::{Compartment, ModuleToggles};
use crate::error::{ConfigError, SimError};
use crate::graph::{sample_contacts_into, ContactGraph};
use crate::implicit::ImplicitWorld;
use crate::params::{matching_override, Attributes, ParamName, ParameterSet, StratificationRule};
use crate::trend::{Mode, TrendMeta, TrendSeries};

pub use icu::admit_icu;
pub use schedule::{active_compartments, effective_at, validate_plan, Effective, ScheduleWindow, ToggleOverrides};
pub use sim::{ContactEntry, EventCounters, Simulation, SimulationState};
pub use trace::{audit_trace, read_trace, write_trace, AuditReport, Cause, TraceRecord};

/// Where contacts come from.
#[derive(Debug, Clone)]
pub enum ContactSource {
    Explicit(ContactGraph),
    Implicit(ImplicitWorld),
}

impl ContactSource {
    pub fn agent_count(&self) -> usize {
        match self {
            ContactSource::Explicit(g) => g.node_count(),
            ContactSource::Implicit(w) => w.agent_count(),
        }
    }

    pub fn attributes(&self, agent: usize) -> &Attributes {
        match self {
            ContactSource::Explicit(g) => g.attributes(agent),
            ContactSource::Implicit(w) => w.attributes(agent),
        }
    }

    /// One iteration of partners for `agent`; returns dropped slots.
    ///
    /// Explicit graphs carry no geography or contexts, so `cap` and
    /// `locked` only affect implicit sampling.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        agent: usize,
        p: f64,
        cap: Option<usize>,
        locked: bool,
        rng: &mut R,
        out: &mut Vec<u32>,
    ) -> usize {
        match self {
            ContactSource::Explicit(g) => {
                sample_contacts_into(agent, g, p, rng, out);
                0
            }
            ContactSource::Implicit(w) => w.sample_into(agent, p, cap, locked, rng, out),
        }
    }

    pub fn memory_bytes(&self) -> usize {
        match self {
            ContactSource::Explicit(g) => g.memory_bytes(),
            ContactSource::Implicit(w) => w.memory_bytes(),
        }
    }
}

impl From<ContactGraph> for ContactSource {
    fn from(g: ContactGraph) -> Self {
        ContactSource::Explicit(g)
    }
}

impl From<ImplicitWorld> for ContactSource {
    fn from(w: ImplicitWorld) -> Self {
        ContactSource::Implicit(w)
    }
}

/// Everything a run needs besides the seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub toggles: ModuleToggles,
    pub params: ParameterSet,
    pub stratification: Vec<StratificationRule>,
    pub source: Arc<ContactSource>,
    /// Fraction of agents infected (in `I`) at iteration 0.
    pub initial_infected: f64,
    pub iterations: u32,
    pub schedule: Vec<ScheduleWindow>,
    /// Identifies the configuration in output metadata.
    pub hash: String,
}

impl Scenario {
    pub fn new(toggles: ModuleToggles, params: ParameterSet, source: impl Into<ContactSource>) -> Self {
        Self {
            toggles,
            params,
            stratification: Vec::new(),
            source: Arc::new(source.into()),
            initial_infected: 1e-4,
            iterations: 1,
            schedule: Vec::new(),
            hash: String::new(),
        }
    }

    pub fn agent_count(&self) -> usize {
        self.source.agent_count()
    }

    pub fn effective(&self, t: u32) -> Effective {
        effective_at(t, &self.toggles, &self.params, &self.schedule)
    }

    /// Copies each default stratification rule into the base parameters.
    pub fn apply_default_rules(&mut self) {
        for rule in self.stratification.iter().filter(|r| r.is_default()) {
            self.params.set(rule.parameter, rule.value);
        }
    }

    /// Every compartment enabled at some iteration.
    pub fn active_compartments(&self) -> Vec<Compartment> {
        active_compartments(&self.toggles, &self.params, &self.schedule, self.iterations)
    }

    /// All violations: run controls, windows, and model validity of every
    /// effective configuration.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errors = validate_plan(
            &self.toggles,
            &self.params,
            &self.stratification,
            &self.schedule,
            self.iterations,
            self.initial_infected,
        );
        if self.agent_count() == 0 {
            errors.push("no agents".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}

/// Resolves every stratified parameter for every agent, failing on
/// predicates over attributes an agent lacks.
pub fn check_stratification(scenario: &Scenario) -> Result<(), ConfigError> {
    AgentParams::resolve(scenario).map(drop)
}

/// Per-agent stratified values; `NaN` marks agents using the current
/// (possibly scheduled) default.
#[derive(Debug, Clone, Default)]
pub(crate) struct AgentParams {
    table: Vec<Option<Box<[f64]>>>,
}

impl AgentParams {
    pub(crate) fn resolve(scenario: &Scenario) -> Result<Self, ConfigError> {
        let n = scenario.agent_count();
        let mut table = vec![None; ParamName::ALL.len()];
        for name in ParamName::ALL {
            if !scenario
                .stratification
                .iter()
                .any(|r| r.parameter == name && !r.is_default())
            {
                continue;
            }
            let column = (0..n)
                .map(|a| {
                    matching_override(name, scenario.source.attributes(a), &scenario.stratification)
                        .map(|v| v.unwrap_or(f64::NAN))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            table[name as usize] = Some(column.into_boxed_slice());
        }
        Ok(Self { table })
    }

    #[inline]
    pub(crate) fn get(&self, agent: usize, name: ParamName, eff: &ParameterSet) -> f64 {
        match &self.table[name as usize] {
            Some(col) if !col[agent].is_nan() => col[agent],
            _ => eff.get(name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    /// Worker threads for the contact phase; results do not depend on it.
    pub threads: usize,
    /// Keep a full event trace.
    pub trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            threads: 1,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub series: TrendSeries,
    pub counters: EventCounters,
    pub trace: Vec<TraceRecord>,
}

/// Runs `scenario` for its iterations from a seeded initial assignment.
pub fn run(scenario: &Scenario, seed: u64) -> Result<RunOutput, SimError> {
    run_with(scenario, seed, &RunOptions::default())
}

pub fn run_with(scenario: &Scenario, seed: u64, options: &RunOptions) -> Result<RunOutput, SimError> {
    let mut sim = Simulation::new(scenario, seed, options)?;
    let mut series = TrendSeries::new(
        TrendMeta {
            scenario_hash: scenario.hash.clone(),
            seed: Some(seed),
            mode: Mode::Agent,
            fidelity: None,
        },
        &scenario.active_compartments(),
    );
    series.push_full(&sim.state().counts_f64());
    for _ in 0..scenario.iterations {
        sim.step()?;
        series.push_full(&sim.state().counts_f64());
    }
    let (state, trace) = sim.finish();
    Ok(RunOutput {
        series,
        counters: state.counters,
        trace,
    })
}
