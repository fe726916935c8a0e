//! Run orchestration: seed sweeps in agent mode and scheduled mean-field
//! integration.

use rayon::prelude::*;

use crate::compartment::{Compartment, ModuleToggles};
use crate::config::MeanFieldConfig;
use crate::engine::{effective_at, run_with, RunOptions, RunOutput, Scenario, ScheduleWindow};
use crate::error::SimError;
use crate::meanfield::{integrate, ClampEvent, MeanFieldState, OdeModel, OdeVariant};
use crate::params::ParameterSet;
use crate::trend::{Mode, TrendMeta, TrendSeries};

/// One run per seed, in parallel over at most `jobs` workers; results keep
/// the order of `seeds`.
pub fn run_seeds(
    scenario: &Scenario,
    seeds: &[u64],
    options: &RunOptions,
    jobs: usize,
) -> Result<Vec<RunOutput>, SimError> {
    let work = || {
        seeds
            .par_iter()
            .map(|&seed| run_with(scenario, seed, options))
            .collect::<Result<Vec<_>, _>>()
    };
    if jobs <= 1 {
        return seeds.iter().map(|&seed| run_with(scenario, seed, options)).collect();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| SimError::Invalid(format!("thread pool: {e}")))?
        .install(work)
}

/// Inputs of a mean-field run besides the integrator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldPlan {
    pub toggles: ModuleToggles,
    pub params: ParameterSet,
    pub schedule: Vec<ScheduleWindow>,
    pub iterations: u32,
    pub initial_infected: f64,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldOutput {
    pub model: OdeModel,
    pub series: TrendSeries,
    /// Clamped negative components, with steps counted from the start.
    pub clamps: Vec<ClampEvent>,
}

/// Integrates iteration by iteration under the schedule.
///
/// Adherence `tau` only acts while a lockdown is in force; when it lifts,
/// the lockdown compartments flow back into `S`, `E` and `I` at once.
pub fn run_meanfield(plan: &MeanFieldPlan, settings: &MeanFieldConfig) -> Result<MeanFieldOutput, SimError> {
    let steps = settings.steps_per_iteration().map_err(SimError::Invalid)?;
    let mut union = [false; 8];
    for t in 0..plan.iterations.max(1) {
        let flags = effective_at(t, &plan.toggles, &plan.params, &plan.schedule).toggles.as_array();
        for (u, f) in union.iter_mut().zip(flags) {
            *u |= f;
        }
    }
    let union = ModuleToggles::from_array(union);
    let model = settings.model.unwrap_or_else(|| OdeModel::for_toggles(&union));
    let variant = OdeVariant::new(model, settings.fidelity);
    let dt = settings.dt;

    let mut series = TrendSeries::new(
        TrendMeta {
            scenario_hash: plan.hash.clone(),
            seed: None,
            mode: Mode::Meanfield,
            fidelity: Some(settings.fidelity),
        },
        &union.enabled_compartments(),
    );
    let mut x = MeanFieldState::seeded(settings.n, plan.initial_infected);
    series.push_full(x.values());
    let mut clamps = Vec::new();
    let mut locked = false;
    for t in 0..plan.iterations {
        let eff = effective_at(t, &plan.toggles, &plan.params, &plan.schedule);
        if locked && !eff.lockdown_active() {
            for c in [Compartment::SL, Compartment::EL, Compartment::IL] {
                let to = c.released().expect("lockdown compartment");
                x[to] += x[c];
                x[c] = 0.0;
            }
        }
        locked = eff.lockdown_active();
        let params = module_params(eff.params, &eff.toggles);
        let traj = integrate(&x, &params, variant, dt, steps, settings.method)?;
        let offset = t as usize * steps;
        clamps.extend(traj.clamps.iter().map(|c| ClampEvent {
            step: c.step + offset,
            ..*c
        }));
        x = *traj.last();
        series.push_full(x.values());
    }
    Ok(MeanFieldOutput { model, series, clamps })
}

/// Zeroes the entry rates of switched-off modules, so the equations only
/// move mass along edges the agent engine would allow.
fn module_params(mut p: ParameterSet, toggles: &ModuleToggles) -> ParameterSet {
    if !toggles.testing {
        p.theta_e = 0.0;
        p.theta_i = 0.0;
    }
    if !toggles.lockdown {
        p.tau = 0.0;
    }
    if !toggles.death {
        p.omega = 0.0;
        p.omega_t = 0.0;
        p.omega_f = Some(0.0);
    }
    if !toggles.icu {
        p.iota = 0.0;
    }
    if !toggles.corpse {
        p.z = 0.0;
    }
    if !toggles.reinfection {
        p.s = 0.0;
    }
    if !toggles.vaccination {
        p.v = 0.0;
    }
    p
}
