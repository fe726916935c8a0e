use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::compartment::{Compartment, ModuleToggles};
use crate::params::{validate_model, ParamName, ParameterSet, StratificationRule};

/// Partial toggle assignment; `None` keeps the underlying value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToggleOverrides {
    pub testing: Option<bool>,
    pub lockdown: Option<bool>,
    pub death: Option<bool>,
    pub icu: Option<bool>,
    pub corpse: Option<bool>,
    pub reinfection: Option<bool>,
    pub vaccination: Option<bool>,
    pub tracing: Option<bool>,
}

impl ToggleOverrides {
    pub fn apply(&self, toggles: &mut ModuleToggles) {
        let pairs = [
            (self.testing, &mut toggles.testing),
            (self.lockdown, &mut toggles.lockdown),
            (self.death, &mut toggles.death),
            (self.icu, &mut toggles.icu),
            (self.corpse, &mut toggles.corpse),
            (self.reinfection, &mut toggles.reinfection),
            (self.vaccination, &mut toggles.vaccination),
            (self.tracing, &mut toggles.tracing),
        ];
        for (value, slot) in pairs {
            if let Some(v) = value {
                *slot = v;
            }
        }
    }
}

/// Overrides active for iterations `start..end`.
///
/// A lockdown is in force while the effective `lockdown` toggle is on: it
/// starts when a window switches the toggle on and every locked agent is
/// released when it goes off again.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleWindow {
    pub start: u32,
    pub end: u32,
    #[serde(default)]
    pub params: BTreeMap<ParamName, f64>,
    #[serde(default)]
    pub toggles: ToggleOverrides,
    /// Long-range partners must share this tessellation level's region.
    #[serde(default)]
    pub mobility_level_cap: Option<usize>,
}

impl ScheduleWindow {
    pub fn new(start: u32, end: u32) -> Self {
        Self {
            start,
            end,
            ..Default::default()
        }
    }

    pub fn lockdown(start: u32, end: u32) -> Self {
        Self {
            toggles: ToggleOverrides {
                lockdown: Some(true),
                ..Default::default()
            },
            ..Self::new(start, end)
        }
    }

    pub fn with_param(mut self, name: ParamName, value: f64) -> Self {
        self.params.insert(name, value);
        self
    }

    pub fn with_cap(mut self, level: usize) -> Self {
        self.mobility_level_cap = Some(level);
        self
    }

    pub fn contains(&self, t: u32) -> bool {
        self.start <= t && t < self.end
    }
}

/// Toggles, parameters and mobility cap in force during one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Effective {
    pub toggles: ModuleToggles,
    pub params: ParameterSet,
    pub mobility_level_cap: Option<usize>,
}

impl Effective {
    pub fn lockdown_active(&self) -> bool {
        self.toggles.lockdown
    }
}

/// Base values overridden by every window containing `t`, in declaration
/// order, so later windows win on conflicting keys.
pub fn effective_at(
    t: u32,
    toggles: &ModuleToggles,
    params: &ParameterSet,
    schedule: &[ScheduleWindow],
) -> Effective {
    let mut eff = Effective {
        toggles: *toggles,
        params: params.clone(),
        mobility_level_cap: None,
    };
    for w in schedule.iter().filter(|w| w.contains(t)) {
        w.toggles.apply(&mut eff.toggles);
        for (&name, &value) in &w.params {
            eff.params.set(name, value);
        }
        if w.mobility_level_cap.is_some() {
            eff.mobility_level_cap = w.mobility_level_cap;
        }
    }
    eff
}

/// First iteration of each distinct effective configuration in `0..iterations`.
fn phase_starts(schedule: &[ScheduleWindow], iterations: u32) -> Vec<u32> {
    let mut starts: Vec<u32> = vec![0];
    for w in schedule {
        starts.extend([w.start, w.end]);
    }
    starts.retain(|&t| t < iterations.max(1));
    starts.sort_unstable();
    starts.dedup();
    starts
}

/// Every compartment enabled at some iteration, in canonical order.
pub fn active_compartments(
    toggles: &ModuleToggles,
    params: &ParameterSet,
    schedule: &[ScheduleWindow],
    iterations: u32,
) -> Vec<Compartment> {
    let mut union = [false; Compartment::COUNT];
    for t in phase_starts(schedule, iterations) {
        for c in effective_at(t, toggles, params, schedule).toggles.enabled_compartments() {
            union[c.index()] = true;
        }
    }
    Compartment::ALL.into_iter().filter(|c| union[c.index()]).collect()
}

/// Run controls, windows, and model validity of every effective
/// configuration; empty when the plan is valid.
pub fn validate_plan(
    toggles: &ModuleToggles,
    params: &ParameterSet,
    rules: &[StratificationRule],
    schedule: &[ScheduleWindow],
    iterations: u32,
    initial_infected: f64,
) -> Vec<String> {
    let mut errors = Vec::new();
    if !(initial_infected > 0.0 && initial_infected <= 1.0) {
        errors.push(format!("initial infected fraction {initial_infected} outside (0, 1]"));
    }
    if iterations == 0 {
        errors.push("iterations must be at least 1".into());
    }
    for (k, w) in schedule.iter().enumerate() {
        if w.start >= w.end {
            errors.push(format!("schedule window {k}: start {} >= end {}", w.start, w.end));
        }
        for (&name, &value) in &w.params {
            if !name.in_range(value) {
                errors.push(format!("schedule window {k}: {name} = {value} out of range"));
            }
        }
    }
    for t in phase_starts(schedule, iterations) {
        let eff = effective_at(t, toggles, params, schedule);
        if let Err(list) = validate_model(&eff.toggles, &eff.params, rules) {
            for e in list {
                let msg = if t == 0 { e } else { format!("{e} (from iteration {t})") };
                if !errors.contains(&msg) {
                    errors.push(msg);
                }
            }
        }
    }
    errors
}
