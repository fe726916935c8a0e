use std::collections::{BTreeMap, HashSet, VecDeque};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compartment::Compartment::{self, *};
use crate::error::SimError;
use crate::graph::flip;
use crate::params::ParamName::{
    self, Beta, Gamma, GammaT, Iota, KappaE, KappaI, Mu, Omega, OmegaF, OmegaT, Sigma, Tau, ThetaE,
    ThetaI, Z, P,
};
use crate::rng::{Phase, Streams};

use super::icu::admit_icu;
use super::schedule::Effective;
use super::trace::{Cause, TraceRecord};
use super::{AgentParams, ContactSource, RunOptions, Scenario};

/// One interaction event kept for contact tracing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactEntry {
    pub iteration: u32,
    pub agent: u32,
    pub partner: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounters {
    pub contacts: u64,
    pub dropped_contacts: u64,
    pub infections: u64,
    pub corpse_infections: u64,
    pub progressions: u64,
    pub tests: u64,
    pub traced_tests: u64,
    pub admissions: u64,
    pub overflows: u64,
    pub displacements: u64,
    pub recoveries: u64,
    pub deaths: u64,
    pub lockdown_entries: u64,
    pub lockdown_escapes: u64,
    pub lockdown_releases: u64,
    pub reinfections: u64,
    pub vaccinations: u64,
    pub nullifications: u64,
}

impl EventCounters {
    fn record(&mut self, cause: Cause) {
        let slot = match cause {
            Cause::Infection => &mut self.infections,
            Cause::Corpse => &mut self.corpse_infections,
            Cause::Progression => &mut self.progressions,
            Cause::Testing => &mut self.tests,
            Cause::Tracing => &mut self.traced_tests,
            Cause::IcuAdmission => &mut self.admissions,
            Cause::IcuOverflow => &mut self.overflows,
            Cause::IcuDisplacement => &mut self.displacements,
            Cause::Recovery => &mut self.recoveries,
            Cause::Death => &mut self.deaths,
            Cause::LockdownEntry => &mut self.lockdown_entries,
            Cause::LockdownEscape => &mut self.lockdown_escapes,
            Cause::LockdownRelease => &mut self.lockdown_releases,
            Cause::Reinfection => &mut self.reinfections,
            Cause::Vaccination => &mut self.vaccinations,
            Cause::Nullification => &mut self.nullifications,
        };
        *slot += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    /// Iterations completed so far.
    pub t: u32,
    pub compartments: Vec<Compartment>,
    pub counts: [usize; Compartment::COUNT],
    /// Contacts of the last `T_tracing` iterations, oldest first.
    pub contact_log: VecDeque<ContactEntry>,
    pub lockdown_active: bool,
    pub counters: EventCounters,
}

impl SimulationState {
    pub fn count(&self, c: Compartment) -> usize {
        self.counts[c.index()]
    }

    pub fn icu_occupancy(&self) -> usize {
        self.count(HT)
    }

    pub fn counts_f64(&self) -> [f64; Compartment::COUNT] {
        self.counts.map(|c| c as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    to: Compartment,
    cause: Cause,
    via: Option<u32>,
}

#[derive(Debug, Clone, Copy)]
enum Outcome {
    Move(Compartment, Cause),
    Severe,
}

struct SourceResult {
    agent: u32,
    partners: Vec<u32>,
    infected: Vec<(u32, Compartment, Cause)>,
    dropped: usize,
}

/// Read-only view shared by the contact-phase workers.
struct ContactPhase<'a> {
    t: u32,
    compartments: &'a [Compartment],
    moved: &'a [bool],
    eff: &'a Effective,
    params: &'a AgentParams,
    streams: &'a Streams,
    source: &'a ContactSource,
    keep_partners: bool,
}

impl ContactPhase<'_> {
    fn run(&self, agent: u32, buf: &mut Vec<u32>) -> SourceResult {
        let a = agent as usize;
        let from = self.compartments[a];
        let mut rng = self.streams.stream(Phase::Contact, self.t, agent);
        let p = self.params.get(a, P, &self.eff.params);
        buf.clear();
        let dropped = self.source.sample_into(
            a,
            p,
            self.eff.mobility_level_cap,
            from == IL,
            &mut rng,
            buf,
        );
        let mut infected = Vec::new();
        for &b in buf.iter() {
            let bi = b as usize;
            if self.moved[bi] {
                continue;
            }
            let (param, to, cause) = match (from, self.compartments[bi]) {
                (I, S) => (Beta, E, Cause::Infection),
                (IL, SL) => (Beta, EL, Cause::Infection),
                (D, S) => (Z, I, Cause::Corpse),
                _ => continue,
            };
            if flip(self.params.get(bi, param, &self.eff.params), &mut rng) {
                infected.push((b, to, cause));
            }
        }
        SourceResult {
            agent,
            partners: if self.keep_partners { buf.clone() } else { Vec::new() },
            infected,
            dropped,
        }
    }
}

/// A run in progress.
pub struct Simulation<'a> {
    scenario: &'a Scenario,
    params: AgentParams,
    streams: Streams,
    state: SimulationState,
    pool: Option<rayon::ThreadPool>,
    trace: Option<Vec<TraceRecord>>,
}

impl<'a> Simulation<'a> {
    /// Validates `scenario` and seeds `round(fraction * n)` uniformly chosen
    /// agents in `I`; everyone else starts in `S`.
    pub fn new(scenario: &'a Scenario, seed: u64, options: &RunOptions) -> Result<Self, SimError> {
        scenario
            .validate()
            .map_err(|errors| SimError::Invalid(errors.join("; ")))?;
        let params =
            AgentParams::resolve(scenario).map_err(|e| SimError::Invalid(e.to_string()))?;
        let n = scenario.agent_count();
        let infected = ((scenario.initial_infected * n as f64).round() as usize).min(n);
        if infected == 0 {
            return Err(SimError::NoInitialInfected);
        }
        let streams = Streams::new(seed);
        let mut compartments = vec![S; n];
        let mut chosen = index::sample(&mut streams.stream(Phase::Seeding, 0, 0), n, infected).into_vec();
        chosen.sort_unstable();
        for &a in &chosen {
            compartments[a] = I;
        }
        let mut counts = [0; Compartment::COUNT];
        counts[S.index()] = n - infected;
        counts[I.index()] = infected;
        let trace = options.trace.then(|| {
            chosen
                .iter()
                .map(|&a| TraceRecord::Seed {
                    agent: a as u32,
                    compartment: I,
                })
                .collect()
        });
        let pool = if options.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(options.threads)
                    .build()
                    .map_err(|e| SimError::Invalid(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            scenario,
            params,
            streams,
            state: SimulationState {
                t: 0,
                compartments,
                counts,
                contact_log: VecDeque::new(),
                lockdown_active: false,
                counters: EventCounters::default(),
            },
            pool,
            trace,
        })
    }

    pub fn state(&self) -> &SimulationState {
        &self.state
    }

    pub fn finish(self) -> (SimulationState, Vec<TraceRecord>) {
        (self.state, self.trace.unwrap_or_default())
    }

    pub(super) fn apply(&mut self, agent: usize, to: Compartment, cause: Cause, via: Option<u32>) {
        let from = self.state.compartments[agent];
        self.state.compartments[agent] = to;
        self.state.counts[from.index()] -= 1;
        self.state.counts[to.index()] += 1;
        self.state.counters.record(cause);
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRecord::Transition {
                iteration: self.state.t,
                agent: agent as u32,
                from,
                to,
                cause,
                via,
            });
        }
    }

    #[inline]
    fn param(&self, agent: usize, name: ParamName, eff: &Effective) -> f64 {
        self.params.get(agent, name, &eff.params)
    }

    /// One synchronous iteration.
    pub fn step(&mut self) -> Result<(), SimError> {
        let scenario = self.scenario;
        let t = self.state.t;
        let n = self.state.compartments.len();
        let eff = scenario.effective(t);
        let mut moved = vec![false; n];

        // Lockdown boundaries act on the whole population before contacts.
        if self.state.lockdown_active && !eff.lockdown_active() {
            for a in 0..n {
                if let Some(to) = self.state.compartments[a].released() {
                    self.apply(a, to, Cause::LockdownRelease, None);
                    moved[a] = true;
                }
            }
        } else if !self.state.lockdown_active && eff.lockdown_active() {
            for a in 0..n {
                if let Some(to) = self.state.compartments[a].locked() {
                    let tau = self.param(a, Tau, &eff);
                    if tau > 0.0 && flip(tau, &mut self.streams.stream(Phase::Lockdown, t, a as u32)) {
                        self.apply(a, to, Cause::LockdownEntry, None);
                        moved[a] = true;
                    }
                }
            }
        }
        self.state.lockdown_active = eff.lockdown_active();

        if let Some(a) = self
            .state
            .compartments
            .iter()
            .position(|&c| !eff.toggles.enables(c))
        {
            return Err(SimError::InconsistentState {
                iteration: t,
                agent: a,
                compartment: self.state.compartments[a],
            });
        }

        let window = eff.params.t_tracing;
        let log_contacts = eff.toggles.tracing && window > 0;
        let mut pending: Vec<Option<Pending>> = vec![None; n];

        // Contact phase.
        let results = {
            let phase = ContactPhase {
                t,
                compartments: &self.state.compartments,
                moved: &moved,
                eff: &eff,
                params: &self.params,
                streams: &self.streams,
                source: &scenario.source,
                keep_partners: log_contacts || self.trace.is_some(),
            };
            let sources: Vec<u32> = (0..n as u32)
                .filter(|&a| match self.state.compartments[a as usize] {
                    I | IL => true,
                    D => eff.toggles.corpse,
                    _ => false,
                })
                .collect();
            match &self.pool {
                Some(pool) => pool.install(|| {
                    sources
                        .par_iter()
                        .map_init(Vec::new, |buf, &a| phase.run(a, buf))
                        .collect::<Vec<_>>()
                }),
                None => {
                    let mut buf = Vec::new();
                    sources.iter().map(|&a| phase.run(a, &mut buf)).collect()
                }
            }
        };
        for r in results {
            let counters = &mut self.state.counters;
            counters.dropped_contacts += r.dropped as u64;
            counters.contacts += r.partners.len() as u64;
            if log_contacts {
                self.state.contact_log.extend(r.partners.iter().map(|&b| ContactEntry {
                    iteration: t,
                    agent: r.agent,
                    partner: b,
                }));
            }
            if let Some(trace) = &mut self.trace {
                let from = self.state.compartments[r.agent as usize];
                trace.extend(r.partners.iter().map(|&b| TraceRecord::Contact {
                    iteration: t,
                    agent: r.agent,
                    partner: b,
                    from,
                }));
            }
            for (b, to, cause) in r.infected {
                pending[b as usize].get_or_insert(Pending {
                    to,
                    cause,
                    via: Some(r.agent),
                });
            }
        }

        // Transition phase: ordered competing risks, first success wins.
        let toggles = eff.toggles;
        let mut options: Vec<(f64, Outcome)> = Vec::with_capacity(4);
        let mut severe: Vec<u32> = Vec::new();
        let mut icu_leaving = 0usize;
        for a in 0..n {
            if moved[a] || pending[a].is_some() {
                continue;
            }
            let c = self.state.compartments[a];
            let p = |name| self.param(a, name, &eff);
            let test_e = || p(ThetaE) * p(KappaE);
            let test_i = || p(ThetaI) * p(KappaI);
            options.clear();
            let mut push = |on: bool, prob: f64, outcome: Outcome| {
                if on && prob > 0.0 {
                    options.push((prob, outcome));
                }
            };
            use Outcome::{Move, Severe};
            match c {
                S => push(toggles.vaccination, p(ParamName::V), Move(Compartment::V, Cause::Vaccination)),
                E => {
                    push(true, p(Sigma), Move(I, Cause::Progression));
                    push(toggles.testing, test_e(), Move(ET, Cause::Testing));
                }
                I => {
                    push(toggles.death, p(Omega), Move(D, Cause::Death));
                    push(true, p(Gamma), Move(R, Cause::Recovery));
                    push(toggles.testing, test_i(), Move(IT, Cause::Testing));
                }
                ET => push(true, p(Sigma), Move(IT, Cause::Progression)),
                IT => {
                    push(toggles.death, p(OmegaT), Move(D, Cause::Death));
                    push(true, p(GammaT), Move(R, Cause::Recovery));
                    push(toggles.icu, p(Iota), Severe);
                }
                HT => {
                    push(toggles.death, p(OmegaT), Move(D, Cause::Death));
                    push(true, p(GammaT), Move(R, Cause::Recovery));
                }
                Compartment::F => {
                    push(toggles.death, p(OmegaF), Move(D, Cause::Death));
                    push(true, p(GammaT), Move(R, Cause::Recovery));
                }
                SL => {
                    push(toggles.vaccination, p(ParamName::V), Move(Compartment::V, Cause::Vaccination));
                    push(true, p(Mu), Move(S, Cause::LockdownEscape));
                }
                EL => {
                    push(true, p(Sigma), Move(IL, Cause::Progression));
                    push(toggles.testing, test_e(), Move(ET, Cause::Testing));
                    push(true, p(Mu), Move(E, Cause::LockdownEscape));
                }
                IL => {
                    push(toggles.death, p(Omega), Move(D, Cause::Death));
                    push(true, p(Gamma), Move(R, Cause::Recovery));
                    push(toggles.testing, test_i(), Move(IT, Cause::Testing));
                    push(true, p(Mu), Move(I, Cause::LockdownEscape));
                }
                R => push(toggles.reinfection, p(ParamName::S), Move(S, Cause::Reinfection)),
                Compartment::V => push(true, p(ParamName::F), Move(S, Cause::Nullification)),
                D => {}
            }
            if options.is_empty() {
                continue;
            }
            let mut rng = self.streams.stream(Phase::Transition, t, a as u32);
            for &(prob, outcome) in &options {
                if flip(prob, &mut rng) {
                    match outcome {
                        Move(to, cause) => {
                            pending[a] = Some(Pending { to, cause, via: None });
                            if c == HT {
                                icu_leaving += 1;
                            }
                        }
                        Severe => severe.push(a as u32),
                    }
                    break;
                }
            }
        }

        // ICU placement against the beds left after this iteration's exits.
        if toggles.icu {
            let b = eff.params.b.max(0.0).floor() as usize;
            let mut occupancy = self.state.count(HT) - icu_leaving;
            if occupancy > b {
                let staying: Vec<u32> = (0..n as u32)
                    .filter(|&a| self.state.compartments[a as usize] == HT && pending[a as usize].is_none())
                    .collect();
                let mut rng = self.streams.stream(Phase::Icu, t, 1);
                let mut out = index::sample(&mut rng, staying.len(), occupancy - b).into_vec();
                out.sort_unstable();
                for k in out {
                    pending[staying[k] as usize] = Some(Pending {
                        to: Compartment::F,
                        cause: Cause::IcuDisplacement,
                        via: None,
                    });
                }
                occupancy = b;
            }
            if !severe.is_empty() {
                let mut rng = self.streams.stream(Phase::Icu, t, 0);
                let (admitted, overflow) = admit_icu(&severe, occupancy, b, &mut rng);
                for a in admitted {
                    pending[a as usize] = Some(Pending {
                        to: HT,
                        cause: Cause::IcuAdmission,
                        via: None,
                    });
                }
                for a in overflow {
                    pending[a as usize] = Some(Pending {
                        to: Compartment::F,
                        cause: Cause::IcuOverflow,
                        via: None,
                    });
                }
            }
        }

        // Tracing: direct partners of this iteration's positives.
        if log_contacts {
            let positives: HashSet<u32> = (0..n as u32)
                .filter(|&a| matches!(pending[a as usize], Some(Pending { cause: Cause::Testing, .. })))
                .collect();
            if !positives.is_empty() {
                let mut reached: BTreeMap<u32, u32> = BTreeMap::new();
                let mut reach = |x: u32, via: u32| {
                    reached
                        .entry(x)
                        .and_modify(|v| *v = (*v).min(via))
                        .or_insert(via);
                };
                for e in &self.state.contact_log {
                    if positives.contains(&e.agent) {
                        reach(e.partner, e.agent);
                    }
                    if positives.contains(&e.partner) {
                        reach(e.agent, e.partner);
                    }
                }
                for (x, via) in reached {
                    let xi = x as usize;
                    if moved[xi] || pending[xi].is_some() {
                        continue;
                    }
                    let (prob, to) = match self.state.compartments[xi] {
                        E | EL => (self.param(xi, ThetaE, &eff) * self.param(xi, KappaE, &eff), ET),
                        I | IL => (self.param(xi, ThetaI, &eff) * self.param(xi, KappaI, &eff), IT),
                        _ => continue,
                    };
                    if flip(prob, &mut self.streams.stream(Phase::Tracing, t, x)) {
                        pending[xi] = Some(Pending {
                            to,
                            cause: Cause::Tracing,
                            via: Some(via),
                        });
                    }
                }
            }
        }

        for (a, p) in pending.into_iter().enumerate() {
            if let Some(p) = p {
                self.apply(a, p.to, p.cause, p.via);
            }
        }

        if log_contacts {
            let horizon = t + 1;
            while self
                .state
                .contact_log
                .front()
                .is_some_and(|e| e.iteration + window <= horizon)
            {
                self.state.contact_log.pop_front();
            }
        } else {
            self.state.contact_log.clear();
        }
        self.state.t += 1;
        Ok(())
    }
}
