//! Compartment labels, module toggles and the composed transition diagram.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Disease/intervention status of an individual.
///
/// The declaration order is the canonical column order used by every output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Compartment {
    S,
    E,
    I,
    ET,
    IT,
    HT,
    F,
    SL,
    EL,
    IL,
    R,
    D,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetaClass {
    Undetected,
    Tested,
    Lockdown,
    Recovered,
    Dead,
    Vaccinated,
}

impl Compartment {
    pub const COUNT: usize = 13;

    pub const ALL: [Compartment; Self::COUNT] = [
        Compartment::S,
        Compartment::E,
        Compartment::I,
        Compartment::ET,
        Compartment::IT,
        Compartment::HT,
        Compartment::F,
        Compartment::SL,
        Compartment::EL,
        Compartment::IL,
        Compartment::R,
        Compartment::D,
        Compartment::V,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Compartment::S => "S",
            Compartment::E => "E",
            Compartment::I => "I",
            Compartment::ET => "E_T",
            Compartment::IT => "I_T",
            Compartment::HT => "H_T",
            Compartment::F => "F",
            Compartment::SL => "S_L",
            Compartment::EL => "E_L",
            Compartment::IL => "I_L",
            Compartment::R => "R",
            Compartment::D => "D",
            Compartment::V => "V",
        }
    }

    pub fn meta_class(self) -> MetaClass {
        use Compartment::*;
        match self {
            S | E | I => MetaClass::Undetected,
            ET | IT | HT | F => MetaClass::Tested,
            SL | EL | IL => MetaClass::Lockdown,
            R => MetaClass::Recovered,
            D => MetaClass::Dead,
            V => MetaClass::Vaccinated,
        }
    }

    /// Carries the pathogen (exposed, infectious, tested or hospitalized).
    pub fn is_infected(self) -> bool {
        use Compartment::*;
        matches!(self, E | I | ET | IT | HT | F | EL | IL)
    }

    /// Quarantined or hospitalized individuals never emit contacts.
    pub fn is_isolated(self) -> bool {
        self.meta_class() == MetaClass::Tested
    }

    /// Undetected counterpart of a lockdown compartment.
    pub fn released(self) -> Option<Compartment> {
        match self {
            Compartment::SL => Some(Compartment::S),
            Compartment::EL => Some(Compartment::E),
            Compartment::IL => Some(Compartment::I),
            _ => None,
        }
    }

    /// Lockdown counterpart of an undetected compartment.
    pub fn locked(self) -> Option<Compartment> {
        match self {
            Compartment::S => Some(Compartment::SL),
            Compartment::E => Some(Compartment::EL),
            Compartment::I => Some(Compartment::IL),
            _ => None,
        }
    }
}

impl fmt::Display for Compartment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownCompartment(pub String);

impl fmt::Display for UnknownCompartment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown compartment `{}`", self.0)
    }
}

impl std::error::Error for UnknownCompartment {}

impl FromStr for Compartment {
    type Err = UnknownCompartment;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Compartment::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| UnknownCompartment(s.to_string()))
    }
}

impl Serialize for Compartment {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Compartment {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which intervention modules are composed onto the SEIR base.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModuleToggles {
    pub testing: bool,
    pub lockdown: bool,
    pub death: bool,
    pub icu: bool,
    pub corpse: bool,
    pub reinfection: bool,
    pub vaccination: bool,
    pub tracing: bool,
}

impl ModuleToggles {
    pub fn all() -> Self {
        Self {
            testing: true,
            lockdown: true,
            death: true,
            icu: true,
            corpse: true,
            reinfection: true,
            vaccination: true,
            tracing: true,
        }
    }

    pub fn as_array(&self) -> [bool; 8] {
        [
            self.testing,
            self.lockdown,
            self.death,
            self.icu,
            self.corpse,
            self.reinfection,
            self.vaccination,
            self.tracing,
        ]
    }

    pub fn from_array(flags: [bool; 8]) -> Self {
        Self {
            testing: flags[0],
            lockdown: flags[1],
            death: flags[2],
            icu: flags[3],
            corpse: flags[4],
            reinfection: flags[5],
            vaccination: flags[6],
            tracing: flags[7],
        }
    }

    /// Pointwise `self <= other`.
    pub fn is_subset_of(&self, other: &ModuleToggles) -> bool {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .all(|(a, b)| !a || b)
    }

    /// Whether agents may occupy `c` under these toggles.
    pub fn enables(&self, c: Compartment) -> bool {
        use Compartment::*;
        match c {
            S | E | I | R => true,
            ET | IT => self.testing,
            HT | F => self.icu,
            SL | EL | IL => self.lockdown,
            D => self.death,
            V => self.vaccination,
        }
    }

    pub fn enabled_compartments(&self) -> Vec<Compartment> {
        Compartment::ALL
            .into_iter()
            .filter(|c| self.enables(*c))
            .collect()
    }

    /// Violated implications between modules.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.icu && !self.testing {
            out.push("icu requires testing".to_string());
        }
        if self.tracing && !self.testing {
            out.push("tracing requires testing".to_string());
        }
        if self.corpse && !self.death {
            out.push("corpse requires death".to_string());
        }
        out
    }
}

/// Parameter (or parameter product) governing a transition edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransitionRate {
    Beta,
    Sigma,
    Gamma,
    GammaT,
    TestE,
    TestI,
    Iota,
    /// ICU capacity `b`: overflow of severe cases, or displacement when beds shrink.
    Capacity,
    Tau,
    Mu,
    Omega,
    OmegaT,
    OmegaF,
    Corpse,
    Reinfection,
    Vaccination,
    Nullification,
}

impl TransitionRate {
    pub fn symbol(self) -> &'static str {
        match self {
            TransitionRate::Beta => "β",
            TransitionRate::Sigma => "σ",
            TransitionRate::Gamma => "γ",
            TransitionRate::GammaT => "γ_T",
            TransitionRate::TestE => "ϑ_E·κ_E",
            TransitionRate::TestI => "ϑ_I·κ_I",
            TransitionRate::Iota => "ι",
            TransitionRate::Capacity => "b",
            TransitionRate::Tau => "τ",
            TransitionRate::Mu => "μ",
            TransitionRate::Omega => "ω",
            TransitionRate::OmegaT => "ω_T",
            TransitionRate::OmegaF => "ω_F",
            TransitionRate::Corpse => "z",
            TransitionRate::Reinfection => "s",
            TransitionRate::Vaccination => "v",
            TransitionRate::Nullification => "f",
        }
    }
}

impl fmt::Display for TransitionRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Outgoing edges of `from` in the transition diagram composed from `toggles`.
///
/// Edges out of a compartment whose module is disabled are empty.
pub fn allowed_transitions(
    from: Compartment,
    toggles: &ModuleToggles,
) -> Vec<(Compartment, TransitionRate)> {
    use Compartment::*;
    use TransitionRate as Rt;

    let t = toggles;
    let mut out = Vec::new();
    if !t.enables(from) {
        return out;
    }
    match from {
        S => {
            out.push((E, Rt::Beta));
            if t.corpse {
                out.push((I, Rt::Corpse));
            }
            if t.lockdown {
                out.push((SL, Rt::Tau));
            }
            if t.vaccination {
                out.push((V, Rt::Vaccination));
            }
        }
        E => {
            out.push((I, Rt::Sigma));
            if t.testing {
                out.push((ET, Rt::TestE));
            }
            if t.lockdown {
                out.push((EL, Rt::Tau));
            }
        }
        I => {
            if t.testing {
                out.push((IT, Rt::TestI));
            }
            out.push((R, Rt::Gamma));
            if t.death {
                out.push((D, Rt::Omega));
            }
            if t.lockdown {
                out.push((IL, Rt::Tau));
            }
        }
        ET => out.push((IT, Rt::Sigma)),
        IT => {
            out.push((R, Rt::GammaT));
            if t.death {
                out.push((D, Rt::OmegaT));
            }
            if t.icu {
                out.push((HT, Rt::Iota));
                out.push((F, Rt::Capacity));
            }
        }
        HT => {
            out.push((R, Rt::GammaT));
            if t.death {
                out.push((D, Rt::OmegaT));
            }
            out.push((F, Rt::Capacity));
        }
        F => {
            out.push((R, Rt::GammaT));
            if t.death {
                out.push((D, Rt::OmegaF));
            }
        }
        SL => {
            out.push((EL, Rt::Beta));
            out.push((S, Rt::Mu));
            if t.vaccination {
                out.push((V, Rt::Vaccination));
            }
        }
        EL => {
            out.push((IL, Rt::Sigma));
            if t.testing {
                out.push((ET, Rt::TestE));
            }
            out.push((E, Rt::Mu));
        }
        IL => {
            if t.testing {
                out.push((IT, Rt::TestI));
            }
            out.push((R, Rt::Gamma));
            if t.death {
                out.push((D, Rt::Omega));
            }
            out.push((I, Rt::Mu));
        }
        R => {
            if t.reinfection {
                out.push((S, Rt::Reinfection));
            }
        }
        D => {}
        V => out.push((S, Rt::Nullification)),
    }
    out
}

/// Whether `from -> to` is an edge of the diagram under `toggles`.
pub fn is_allowed(from: Compartment, to: Compartment, toggles: &ModuleToggles) -> bool {
    allowed_transitions(from, toggles)
        .iter()
        .any(|(c, _)| *c == to)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Compartment::*;

    #[test]
    fn labels_round_trip_and_meta_classes() {
        for c in Compartment::ALL {
            assert_eq!(c.label().parse::<Compartment>().unwrap(), c);
        }
        for c in [ET, IT, HT, F] {
            assert_eq!(c.meta_class(), MetaClass::Tested);
        }
        for c in [SL, EL, IL] {
            assert_eq!(c.meta_class(), MetaClass::Lockdown);
        }
        assert_eq!(V.meta_class(), MetaClass::Vaccinated);
        assert!("X_T".parse::<Compartment>().is_err());
    }

    #[test]
    fn seir_base() {
        let off = ModuleToggles::default();
        assert_eq!(allowed_transitions(S, &off), vec![(E, TransitionRate::Beta)]);
        assert_eq!(allowed_transitions(E, &off), vec![(I, TransitionRate::Sigma)]);
        assert_eq!(allowed_transitions(I, &off), vec![(R, TransitionRate::Gamma)]);
        assert!(allowed_transitions(R, &off).is_empty());
        assert!(allowed_transitions(ET, &off).is_empty());
    }

    #[test]
    fn testing_adds_quarantine_edges() {
        let t = ModuleToggles {
            testing: true,
            ..Default::default()
        };
        assert_eq!(
            allowed_transitions(I, &t),
            vec![(IT, TransitionRate::TestI), (R, TransitionRate::Gamma)]
        );
        assert_eq!(TransitionRate::TestI.symbol(), "ϑ_I·κ_I");
    }

    #[test]
    fn reinfection_edge() {
        let t = ModuleToggles {
            reinfection: true,
            ..Default::default()
        };
        assert_eq!(allowed_transitions(R, &t), vec![(S, TransitionRate::Reinfection)]);
    }

    #[test]
    fn toggle_implications() {
        let t = ModuleToggles {
            icu: true,
            tracing: true,
            ..Default::default()
        };
        let v = t.violations();
        assert!(v.contains(&"icu requires testing".to_string()));
        assert!(v.contains(&"tracing requires testing".to_string()));
        assert!(ModuleToggles::all().violations().is_empty());
    }

    fn is_cycle_edge(from: Compartment, to: Compartment) -> bool {
        (from == R && to == S) || (from == V && to == S) || from.released() == Some(to)
    }

    fn acyclic_without_cycle_edges(t: &ModuleToggles) -> bool {
        // Kahn's algorithm on the residual graph.
        let mut indeg = [0usize; Compartment::COUNT];
        let mut adj: Vec<Vec<Compartment>> = vec![Vec::new(); Compartment::COUNT];
        for from in Compartment::ALL {
            for (to, _) in allowed_transitions(from, t) {
                if !is_cycle_edge(from, to) {
                    adj[from.index()].push(to);
                    indeg[to.index()] += 1;
                }
            }
        }
        let mut queue: Vec<Compartment> = Compartment::ALL
            .into_iter()
            .filter(|c| indeg[c.index()] == 0)
            .collect();
        let mut seen = 0;
        while let Some(c) = queue.pop() {
            seen += 1;
            for to in &adj[c.index()] {
                indeg[to.index()] -= 1;
                if indeg[to.index()] == 0 {
                    queue.push(*to);
                }
            }
        }
        seen == Compartment::COUNT
    }

    fn toggles() -> impl Strategy<Value = ModuleToggles> {
        any::<[bool; 8]>().prop_map(ModuleToggles::from_array)
    }

    proptest! {
        #[test]
        fn only_documented_cycles(t in toggles()) {
            prop_assert!(acyclic_without_cycle_edges(&t));
        }

        #[test]
        fn disabling_never_adds_edges(a in toggles(), b in toggles()) {
            let lo = ModuleToggles::from_array(
                std::array::from_fn(|i| a.as_array()[i] && b.as_array()[i]));
            prop_assert!(lo.is_subset_of(&a));
            for from in Compartment::ALL {
                let big = allowed_transitions(from, &a);
                for edge in allowed_transitions(from, &lo) {
                    prop_assert!(big.contains(&edge), "{from}: {edge:?} missing from superset");
                }
            }
        }

        #[test]
        fn edges_stay_inside_enabled_compartments(t in toggles()) {
            for from in Compartment::ALL {
                for (to, _) in allowed_transitions(from, &t) {
                    prop_assert!(t.enables(from) && t.enables(to));
                }
            }
        }
    }
}
