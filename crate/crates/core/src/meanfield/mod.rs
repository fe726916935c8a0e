//! Deterministic mean-field formulation: the seven ODE systems of the
//! framework and a fixed-step integrator.
//!
//! Everything here is generic over [`Scalar`], so the same systems can be
//! solved in `f32` or `f64`.

mod integrate;
mod rhs;

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::compartment::{Compartment, ModuleToggles};
use crate::params::ParameterSet;
use crate::scalar::Scalar;

pub use integrate::{integrate, max_outflow_rate, ClampEvent, Method, Trajectory};
pub use rhs::{derivatives, unused_parameters};

/// Which system of equations to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OdeModel {
    #[serde(rename = "UTR")]
    Utr,
    #[serde(rename = "UTLR")]
    Utlr,
    #[serde(rename = "UTLDR")]
    Utldr,
    #[serde(rename = "UTLDR_ICU")]
    UtldrIcu,
    #[serde(rename = "UTLDR_CORPSE")]
    UtldrCorpse,
    #[serde(rename = "UTLDR_IMMUNITY")]
    UtldrImmunity,
    #[serde(rename = "UTLDR_VACCINATION")]
    UtldrVaccination,
}

impl OdeModel {
    pub const ALL: [OdeModel; 7] = [
        OdeModel::Utr,
        OdeModel::Utlr,
        OdeModel::Utldr,
        OdeModel::UtldrIcu,
        OdeModel::UtldrCorpse,
        OdeModel::UtldrImmunity,
        OdeModel::UtldrVaccination,
    ];

    /// Position in the incremental chain, UTR = 1.
    pub fn level(self) -> u8 {
        self as u8 + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            OdeModel::Utr => "UTR",
            OdeModel::Utlr => "UTLR",
            OdeModel::Utldr => "UTLDR",
            OdeModel::UtldrIcu => "UTLDR_ICU",
            OdeModel::UtldrCorpse => "UTLDR_CORPSE",
            OdeModel::UtldrImmunity => "UTLDR_IMMUNITY",
            OdeModel::UtldrVaccination => "UTLDR_VACCINATION",
        }
    }

    pub fn has_lockdown(self) -> bool {
        self.level() >= 2
    }

    pub fn has_death(self) -> bool {
        self.level() >= 3
    }

    pub fn has_icu(self) -> bool {
        self.level() >= 4
    }

    pub fn has_corpse(self) -> bool {
        self.level() >= 5
    }

    pub fn has_immunity(self) -> bool {
        self.level() >= 6
    }

    pub fn has_vaccination(self) -> bool {
        self.level() >= 7
    }

    /// Compartments carried by this system, in canonical order. `F` is
    /// an agent-level compartment and never appears here.
    pub fn compartments(self) -> Vec<Compartment> {
        use Compartment::*;
        Compartment::ALL
            .into_iter()
            .filter(|c| match c {
                S | E | I | ET | IT | R => true,
                SL | EL | IL => self.has_lockdown(),
                D => self.has_death(),
                HT => self.has_icu(),
                V => self.has_vaccination(),
                F => false,
            })
            .collect()
    }

    pub fn is_active(self, c: Compartment) -> bool {
        self.compartments().contains(&c)
    }

    /// Smallest system covering the enabled modules.
    pub fn for_toggles(t: &ModuleToggles) -> OdeModel {
        if t.vaccination {
            OdeModel::UtldrVaccination
        } else if t.reinfection {
            OdeModel::UtldrImmunity
        } else if t.corpse {
            OdeModel::UtldrCorpse
        } else if t.icu {
            OdeModel::UtldrIcu
        } else if t.death {
            OdeModel::Utldr
        } else if t.lockdown {
            OdeModel::Utlr
        } else {
            OdeModel::Utr
        }
    }
}

impl fmt::Display for OdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OdeModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OdeModel::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown ODE variant `{s}`"))
    }
}

/// How literally the equations are transcribed.
///
/// `AsWritten` reproduces the published systems term by term, including
/// the doubled `sigma E_T` outflow, the `iota b I_T` ICU term and `+z D`
/// returning to `S`. `DiagramConsistent` follows the transition diagrams:
/// `E_T` flows wholly to `I_T`, `H_T` receives `iota I_T` with no capacity
/// term, tested cases use `gamma_T`/`omega_T`, corpses infect by mass action
/// and vaccination wanes only to `S`. Both agree through `UTLDR`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fidelity {
    AsWritten,
    #[default]
    DiagramConsistent,
}

impl FromStr for Fidelity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "as-written" | "as_written" => Ok(Fidelity::AsWritten),
            "diagram" | "diagram-consistent" | "diagram_consistent" => {
                Ok(Fidelity::DiagramConsistent)
            }
            _ => Err(format!("unknown fidelity `{s}`")),
        }
    }
}

impl fmt::Display for Fidelity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fidelity::AsWritten => "as_written",
            Fidelity::DiagramConsistent => "diagram_consistent",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OdeVariant {
    pub model: OdeModel,
    pub fidelity: Fidelity,
}

impl OdeVariant {
    pub fn new(model: OdeModel, fidelity: Fidelity) -> Self {
        Self { model, fidelity }
    }

    pub fn as_written(model: OdeModel) -> Self {
        Self::new(model, Fidelity::AsWritten)
    }

    pub fn diagram(model: OdeModel) -> Self {
        Self::new(model, Fidelity::DiagramConsistent)
    }
}

/// Compartment masses of a closed population of size `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldState<T> {
    values: [T; Compartment::COUNT],
    pub n: T,
}

impl<T: Scalar> MeanFieldState<T> {
    pub fn zeros(n: T) -> Self {
        Self {
            values: [T::zero(); Compartment::COUNT],
            n,
        }
    }

    /// `S = n (1 - fraction)`, `I = n fraction`.
    pub fn seeded(n: T, infected_fraction: T) -> Self {
        let mut state = Self::zeros(n);
        state[Compartment::I] = n * infected_fraction;
        state[Compartment::S] = n - state[Compartment::I];
        state
    }

    pub fn from_values(values: [T; Compartment::COUNT], n: T) -> Self {
        Self { values, n }
    }

    pub fn values(&self) -> &[T; Compartment::COUNT] {
        &self.values
    }

    pub fn total(&self) -> T {
        self.values.iter().fold(T::zero(), |acc, &x| acc + x)
    }

    /// Non-negativity, mass only in active compartments, and closure
    /// `sum == n` within `tolerance * n`.
    pub fn check(&self, model: OdeModel, tolerance: T) -> Result<(), String> {
        if !(self.n > T::zero()) {
            return Err(format!("population {} is not positive", self.n));
        }
        for c in Compartment::ALL {
            let x = self[c];
            if !x.is_finite() || x < T::zero() {
                return Err(format!("{c} = {x} is negative or non-finite"));
            }
            if x > T::zero() && !model.is_active(c) {
                return Err(format!("{c} is not part of {model}"));
            }
        }
        let gap = (self.total() - self.n).abs();
        if gap > tolerance * self.n {
            return Err(format!("components sum to {}, not {}", self.total(), self.n));
        }
        Ok(())
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> MeanFieldState<U> {
        MeanFieldState {
            values: self.values.map(|x| U::of(x.as_f64())),
            n: U::of(self.n.as_f64()),
        }
    }
}

impl<T> Index<Compartment> for MeanFieldState<T> {
    type Output = T;

    fn index(&self, c: Compartment) -> &T {
        &self.values[c.index()]
    }
}

impl<T> IndexMut<Compartment> for MeanFieldState<T> {
    fn index_mut(&mut self, c: Compartment) -> &mut T {
        &mut self.values[c.index()]
    }
}

/// Rates converted once into the working scalar type.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Rates<T> {
    pub beta: T,
    pub sigma: T,
    pub gamma: T,
    pub gamma_t: T,
    pub test_e: T,
    pub test_i: T,
    pub tau: T,
    pub mu: T,
    pub omega: T,
    pub omega_t: T,
    pub iota: T,
    pub b: T,
    pub z: T,
    pub s: T,
    pub v: T,
    pub f: T,
}

impl<T: Scalar> Rates<T> {
    pub fn new(p: &ParameterSet) -> Self {
        Self {
            beta: T::of(p.beta),
            sigma: T::of(p.sigma),
            gamma: T::of(p.gamma),
            gamma_t: T::of(p.gamma_t),
            test_e: T::of(p.theta_e) * T::of(p.kappa_e),
            test_i: T::of(p.theta_i) * T::of(p.kappa_i),
            tau: T::of(p.tau),
            mu: T::of(p.mu),
            omega: T::of(p.omega),
            omega_t: T::of(p.omega_t),
            iota: T::of(p.iota),
            b: T::of(p.b),
            z: T::of(p.z),
            s: T::of(p.s),
            v: T::of(p.v),
            f: T::of(p.f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_compartments() {
        use Compartment::*;
        assert_eq!(OdeModel::Utr.compartments(), vec![S, E, I, ET, IT, R]);
        assert_eq!(
            OdeModel::UtldrIcu.compartments(),
            vec![S, E, I, ET, IT, HT, SL, EL, IL, R, D]
        );
        assert!(OdeModel::UtldrVaccination.is_active(V));
        assert!(OdeModel::ALL.iter().all(|m| !m.is_active(F)));
    }

    #[test]
    fn seeded_state_is_closed() {
        let s = MeanFieldState::<f64>::seeded(5000.0, 1e-4);
        assert!(s.check(OdeModel::Utr, 1e-12).is_ok());
        assert_eq!(s[Compartment::I], 0.5);
    }

    #[test]
    fn variant_names_parse() {
        for m in OdeModel::ALL {
            assert_eq!(m.name().parse::<OdeModel>().unwrap(), m);
        }
        assert_eq!("as-written".parse::<Fidelity>().unwrap(), Fidelity::AsWritten);
        assert_eq!("diagram".parse::<Fidelity>().unwrap(), Fidelity::DiagramConsistent);
    }

    #[test]
    fn toggles_pick_smallest_covering_system() {
        let t = ModuleToggles {
            testing: true,
            icu: true,
            death: true,
            ..Default::default()
        };
        assert_eq!(OdeModel::for_toggles(&t), OdeModel::UtldrIcu);
        assert_eq!(OdeModel::for_toggles(&ModuleToggles::default()), OdeModel::Utr);
    }
}
