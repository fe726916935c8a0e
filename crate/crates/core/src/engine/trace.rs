use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compartment::{is_allowed, Compartment};
use crate::error::DataError;
use crate::params::ParamName;

use super::{AgentParams, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Infection,
    Corpse,
    Progression,
    Testing,
    Tracing,
    IcuAdmission,
    IcuOverflow,
    IcuDisplacement,
    Recovery,
    Death,
    LockdownEntry,
    LockdownEscape,
    LockdownRelease,
    Reinfection,
    Vaccination,
    Nullification,
}

/// One line of the event trace.
///
/// Within an iteration, records appear as: lockdown entries or releases,
/// contacts, then every other transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceRecord {
    /// Initial assignment; agents without one start in `S`.
    Seed { agent: u32, compartment: Compartment },
    Contact {
        iteration: u32,
        agent: u32,
        partner: u32,
        from: Compartment,
    },
    Transition {
        iteration: u32,
        agent: u32,
        from: Compartment,
        to: Compartment,
        cause: Cause,
        /// Infecting agent, or the positive contact for a traced test.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        via: Option<u32>,
    },
}

impl TraceRecord {
    fn iteration(&self) -> Option<u32> {
        match self {
            TraceRecord::Seed { .. } => None,
            TraceRecord::Contact { iteration, .. } | TraceRecord::Transition { iteration, .. } => {
                Some(*iteration)
            }
        }
    }
}

/// Writes records as JSON lines.
pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<(), DataError> {
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut records = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DataError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| DataError::Schema {
            file: path.display().to_string(),
            line: k as u64 + 1,
            message: e.to_string(),
        })?);
    }
    Ok(records)
}

/// Invariant violations found by replaying a trace.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub transitions: usize,
    pub contacts: usize,
    /// Contacts emitted by agents in `E_T`, `I_T`, `H_T` or `F`.
    pub isolated_contacts: usize,
    /// Contacts emitted by any other non-infectious agent.
    pub non_source_contacts: usize,
    /// Transitions that are not edges of the diagram in force.
    pub illegal_transitions: usize,
    /// Transitions whose `from` disagrees with the replayed state.
    pub inconsistent_transitions: usize,
    pub repeated_transitions: usize,
    /// Traced tests without a positive contact inside the window.
    pub tracing_outside_window: usize,
    /// Iterations ending with more agents in `H_T` than beds.
    pub capacity_violations: usize,
    /// Iterations whose ICU admissions/overflow disagree with free beds.
    pub admission_mismatches: usize,
    /// Lockdown entries by agents whose adherence resolves to zero.
    pub exemption_violations: usize,
    /// First few violations in words.
    pub messages: Vec<String>,
}

impl AuditReport {
    pub fn violations(&self) -> usize {
        self.isolated_contacts
            + self.non_source_contacts
            + self.illegal_transitions
            + self.inconsistent_transitions
            + self.repeated_transitions
            + self.tracing_outside_window
            + self.capacity_violations
            + self.admission_mismatches
            + self.exemption_violations
    }

    pub fn is_clean(&self) -> bool {
        self.violations() == 0
    }

    fn note(&mut self, msg: String) {
        if self.messages.len() < 20 {
            self.messages.push(msg);
        }
    }
}

#[derive(Default)]
struct IterationIcu {
    exits: usize,
    displaced: usize,
    admitted: usize,
    overflow: usize,
    start: usize,
}

/// Replays `records` against `scenario` and checks isolation, legality,
/// tracing windows, ICU capacity and lockdown exemptions.
pub fn audit_trace(records: &[TraceRecord], scenario: &Scenario) -> AuditReport {
    use Compartment::*;
    let mut report = AuditReport::default();
    let n = scenario.agent_count();
    let params = AgentParams::resolve(scenario).unwrap_or_default();
    let mut comp = vec![S; n];
    let mut counts = [0usize; Compartment::COUNT];
    counts[S.index()] = n;
    let mut pair_contacts: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
    let mut moved: HashSet<u32> = HashSet::new();
    let mut testing_positive: HashSet<u32> = HashSet::new();
    let mut traced: Vec<(u32, u32, Option<u32>)> = Vec::new();
    let mut current: Option<u32> = None;
    let mut icu = IterationIcu::default();

    let close = |t: u32,
                 counts: &[usize; Compartment::COUNT],
                 icu: &IterationIcu,
                 testing_positive: &HashSet<u32>,
                 traced: &[(u32, u32, Option<u32>)],
                 pair_contacts: &HashMap<(u32, u32), Vec<u32>>,
                 report: &mut AuditReport| {
        let eff = scenario.effective(t);
        let b = eff.params.b.max(0.0).floor() as usize;
        if eff.toggles.icu {
            if counts[HT.index()] > b {
                report.capacity_violations += 1;
                report.note(format!("iteration {t}: {} in H_T with {b} beds", counts[HT.index()]));
            }
            let occupancy = icu.start - icu.exits - icu.displaced;
            let free = b.saturating_sub(occupancy);
            let candidates = icu.admitted + icu.overflow;
            if icu.admitted != candidates.min(free) {
                report.admission_mismatches += 1;
                report.note(format!(
                    "iteration {t}: {candidates} severe cases, {free} free beds, {} admitted",
                    icu.admitted
                ));
            }
        }
        let window = eff.params.t_tracing;
        for &(x, _, via) in traced {
            let ok = via.is_some_and(|y| {
                testing_positive.contains(&y)
                    && pair_contacts
                        .get(&(x.min(y), x.max(y)))
                        .is_some_and(|its| its.iter().any(|&s| s <= t && s + window > t))
            });
            if !ok {
                report.tracing_outside_window += 1;
                report.note(format!("iteration {t}: agent {x} traced without a positive contact in window"));
            }
        }
    };

    for record in records {
        if let (Some(t), Some(cur)) = (record.iteration(), current) {
            if t != cur {
                close(cur, &counts, &icu, &testing_positive, &traced, &pair_contacts, &mut report);
                moved.clear();
                testing_positive.clear();
                traced.clear();
                icu = IterationIcu::default();
            }
        }
        if let Some(t) = record.iteration() {
            if current != Some(t) {
                icu.start = counts[HT.index()];
            }
            current = Some(t);
        }
        match *record {
            TraceRecord::Seed { agent, compartment } => {
                let a = agent as usize;
                counts[comp[a].index()] -= 1;
                counts[compartment.index()] += 1;
                comp[a] = compartment;
            }
            TraceRecord::Contact {
                iteration,
                agent,
                partner,
                ..
            } => {
                report.contacts += 1;
                let c = comp[agent as usize];
                let corpse = scenario.effective(iteration).toggles.corpse;
                if c.is_isolated() {
                    report.isolated_contacts += 1;
                    report.note(format!("iteration {iteration}: contact from agent {agent} in {c}"));
                } else if !(c == I || c == IL || (c == D && corpse)) {
                    report.non_source_contacts += 1;
                    report.note(format!("iteration {iteration}: contact from agent {agent} in {c}"));
                }
                pair_contacts
                    .entry((agent.min(partner), agent.max(partner)))
                    .or_default()
                    .push(iteration);
            }
            TraceRecord::Transition {
                iteration,
                agent,
                from,
                to,
                cause,
                via,
            } => {
                report.transitions += 1;
                let a = agent as usize;
                if comp[a] != from {
                    report.inconsistent_transitions += 1;
                    report.note(format!(
                        "iteration {iteration}: agent {agent} recorded leaving {from} while in {}",
                        comp[a]
                    ));
                }
                if !moved.insert(agent) {
                    report.repeated_transitions += 1;
                    report.note(format!("iteration {iteration}: agent {agent} moved twice"));
                }
                let toggles = if cause == Cause::LockdownRelease && iteration > 0 {
                    scenario.effective(iteration - 1).toggles
                } else {
                    scenario.effective(iteration).toggles
                };
                if !is_allowed(from, to, &toggles) {
                    report.illegal_transitions += 1;
                    report.note(format!("iteration {iteration}: illegal {from} -> {to} ({cause:?})"));
                }
                if cause == Cause::LockdownEntry {
                    let eff = scenario.effective(iteration);
                    if params.get(a, ParamName::Tau, &eff.params) == 0.0 {
                        report.exemption_violations += 1;
                        report.note(format!("iteration {iteration}: exempt agent {agent} locked down"));
                    }
                }
                match cause {
                    Cause::Testing => {
                        testing_positive.insert(agent);
                    }
                    Cause::Tracing => traced.push((agent, iteration, via)),
                    Cause::IcuAdmission => icu.admitted += 1,
                    Cause::IcuOverflow => icu.overflow += 1,
                    Cause::IcuDisplacement => icu.displaced += 1,
                    _ if from == HT => icu.exits += 1,
                    _ => {}
                }
                counts[comp[a].index()] -= 1;
                counts[to.index()] += 1;
                comp[a] = to;
            }
        }
    }
    if let Some(cur) = current {
        close(cur, &counts, &icu, &testing_positive, &traced, &pair_contacts, &mut report);
    }
    report
}
