//! Transition-controlling parameters and attribute-stratified resolution.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::compartment::ModuleToggles;
use crate::error::ConfigError;

/// Every parameter of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamName {
    Beta,
    Sigma,
    Gamma,
    GammaT,
    ThetaE,
    ThetaI,
    KappaE,
    KappaI,
    Tau,
    Mu,
    Omega,
    OmegaT,
    OmegaF,
    Iota,
    B,
    Z,
    S,
    V,
    F,
    TTracing,
    P,
}

impl ParamName {
    pub const ALL: [ParamName; 21] = [
        ParamName::Beta,
        ParamName::Sigma,
        ParamName::Gamma,
        ParamName::GammaT,
        ParamName::ThetaE,
        ParamName::ThetaI,
        ParamName::KappaE,
        ParamName::KappaI,
        ParamName::Tau,
        ParamName::Mu,
        ParamName::Omega,
        ParamName::OmegaT,
        ParamName::OmegaF,
        ParamName::Iota,
        ParamName::B,
        ParamName::Z,
        ParamName::S,
        ParamName::V,
        ParamName::F,
        ParamName::TTracing,
        ParamName::P,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::Beta => "beta",
            ParamName::Sigma => "sigma",
            ParamName::Gamma => "gamma",
            ParamName::GammaT => "gamma_t",
            ParamName::ThetaE => "theta_e",
            ParamName::ThetaI => "theta_i",
            ParamName::KappaE => "kappa_e",
            ParamName::KappaI => "kappa_i",
            ParamName::Tau => "tau",
            ParamName::Mu => "mu",
            ParamName::Omega => "omega",
            ParamName::OmegaT => "omega_t",
            ParamName::OmegaF => "omega_f",
            ParamName::Iota => "iota",
            ParamName::B => "b",
            ParamName::Z => "z",
            ParamName::S => "s",
            ParamName::V => "v",
            ParamName::F => "f",
            ParamName::TTracing => "t_tracing",
            ParamName::P => "p",
        }
    }

    /// Probabilities and per-iteration rates live in `[0, 1]`.
    pub fn is_probability(self) -> bool {
        !matches!(self, ParamName::B | ParamName::TTracing)
    }

    /// Per-agent parameters; `b` and the tracing window are global.
    pub fn is_stratifiable(self) -> bool {
        self.is_probability()
    }

    pub fn in_range(self, value: f64) -> bool {
        if !value.is_finite() {
            return false;
        }
        match self {
            ParamName::B => value >= 0.0,
            ParamName::TTracing => value >= 0.0 && value.fract() == 0.0,
            _ => (0.0..=1.0).contains(&value),
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamName {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ParamName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| ConfigError::UnknownParameter(s.to_string()))
    }
}

impl Serialize for ParamName {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ParamName {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Rates and probabilities of all transitions. Unset values default to zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParameterSet {
    /// Infection probability per contact.
    pub beta: f64,
    /// Incubation exit rate (`1/sigma` is the exposition period).
    pub sigma: f64,
    pub gamma: f64,
    pub gamma_t: f64,
    pub theta_e: f64,
    pub theta_i: f64,
    /// Per-test detection success: effective detection is `theta * kappa`.
    pub kappa_e: f64,
    pub kappa_i: f64,
    /// Lockdown adherence.
    pub tau: f64,
    /// Lockdown escape.
    pub mu: f64,
    /// Real lethality.
    pub omega: f64,
    /// Observed lethality of tested/hospitalized cases.
    pub omega_t: f64,
    /// Lethality of severe cases without an ICU bed; `omega_t` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_f: Option<f64>,
    /// Probability of a severe case.
    pub iota: f64,
    /// ICU capacity.
    pub b: f64,
    /// Infection from corpses.
    pub z: f64,
    /// Re-infection.
    pub s: f64,
    /// Vaccination.
    pub v: f64,
    /// Vaccination nullification.
    pub f: f64,
    /// Contact-tracing window in iterations.
    pub t_tracing: u32,
    /// Long-range interaction probability.
    pub p: f64,
}

impl ParameterSet {
    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::Beta => self.beta,
            ParamName::Sigma => self.sigma,
            ParamName::Gamma => self.gamma,
            ParamName::GammaT => self.gamma_t,
            ParamName::ThetaE => self.theta_e,
            ParamName::ThetaI => self.theta_i,
            ParamName::KappaE => self.kappa_e,
            ParamName::KappaI => self.kappa_i,
            ParamName::Tau => self.tau,
            ParamName::Mu => self.mu,
            ParamName::Omega => self.omega,
            ParamName::OmegaT => self.omega_t,
            ParamName::OmegaF => self.omega_f(),
            ParamName::Iota => self.iota,
            ParamName::B => self.b,
            ParamName::Z => self.z,
            ParamName::S => self.s,
            ParamName::V => self.v,
            ParamName::F => self.f,
            ParamName::TTracing => f64::from(self.t_tracing),
            ParamName::P => self.p,
        }
    }

    /// Sets a value; `t_tracing` is truncated, so range-check first.
    pub fn set(&mut self, name: ParamName, value: f64) {
        match name {
            ParamName::Beta => self.beta = value,
            ParamName::Sigma => self.sigma = value,
            ParamName::Gamma => self.gamma = value,
            ParamName::GammaT => self.gamma_t = value,
            ParamName::ThetaE => self.theta_e = value,
            ParamName::ThetaI => self.theta_i = value,
            ParamName::KappaE => self.kappa_e = value,
            ParamName::KappaI => self.kappa_i = value,
            ParamName::Tau => self.tau = value,
            ParamName::Mu => self.mu = value,
            ParamName::Omega => self.omega = value,
            ParamName::OmegaT => self.omega_t = value,
            ParamName::OmegaF => self.omega_f = Some(value),
            ParamName::Iota => self.iota = value,
            ParamName::B => self.b = value,
            ParamName::Z => self.z = value,
            ParamName::S => self.s = value,
            ParamName::V => self.v = value,
            ParamName::F => self.f = value,
            ParamName::TTracing => self.t_tracing = value as u32,
            ParamName::P => self.p = value,
        }
    }

    pub fn omega_f(&self) -> f64 {
        self.omega_f.unwrap_or(self.omega_t)
    }

    /// Out-of-range parameters, one message each.
    pub fn range_violations(&self) -> Vec<String> {
        ParamName::ALL
            .into_iter()
            .filter(|&n| !(n == ParamName::OmegaF && self.omega_f.is_none()))
            .filter(|&n| !n.in_range(self.get(n)))
            .map(|n| format!("{n} out of range"))
            .collect()
    }
}

/// Value of an agent attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Num(f64),
    Text(String),
}

impl AttrValue {
    /// Numeric when the text parses as a number.
    pub fn parse(raw: &str) -> AttrValue {
        match raw.trim().parse::<f64>() {
            Ok(x) => AttrValue::Num(x),
            Err(_) => AttrValue::Text(raw.trim().to_string()),
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Num(x) => write!(f, "{x}"),
            AttrValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for AttrValue {
    fn from(x: f64) -> Self {
        AttrValue::Num(x)
    }
}

impl From<&str> for AttrValue {
    fn from(s: &str) -> Self {
        AttrValue::Text(s.to_string())
    }
}

pub type Attributes = BTreeMap<String, AttrValue>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

/// One `attribute <op> value` test of a rule predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttrTest {
    pub attribute: String,
    pub op: Comparator,
    pub value: AttrValue,
}

impl AttrTest {
    pub fn new(attribute: &str, op: Comparator, value: impl Into<AttrValue>) -> Self {
        Self {
            attribute: attribute.to_string(),
            op,
            value: value.into(),
        }
    }

    /// `None` when the attribute is missing.
    pub fn eval(&self, attrs: &Attributes) -> Option<bool> {
        let actual = attrs.get(&self.attribute)?;
        let ord = match (actual, &self.value) {
            (AttrValue::Num(a), AttrValue::Num(b)) => a.partial_cmp(b),
            (AttrValue::Text(a), AttrValue::Text(b)) => Some(a.cmp(b)),
            // Mixed kinds only compare for (in)equality.
            _ => None,
        };
        Some(match (self.op, ord) {
            (Comparator::Eq, o) => o == Some(std::cmp::Ordering::Equal),
            (Comparator::Ne, o) => o != Some(std::cmp::Ordering::Equal),
            (_, None) => false,
            (Comparator::Lt, Some(o)) => o.is_lt(),
            (Comparator::Le, Some(o)) => o.is_le(),
            (Comparator::Gt, Some(o)) => o.is_gt(),
            (Comparator::Ge, Some(o)) => o.is_ge(),
        })
    }
}

/// Evaluates a conjunction; errors with the first missing attribute.
pub fn eval_predicate(tests: &[AttrTest], attrs: &Attributes) -> Result<bool, String> {
    for test in tests {
        match test.eval(attrs) {
            None => return Err(test.attribute.clone()),
            Some(false) => return Ok(false),
            Some(true) => {}
        }
    }
    Ok(true)
}

/// Assigns `value` to `parameter` for agents matching every test of `when`.
/// An empty predicate is the parameter's default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StratificationRule {
    pub parameter: ParamName,
    #[serde(default)]
    pub when: Vec<AttrTest>,
    pub value: f64,
    #[serde(default)]
    pub priority: i32,
}

impl StratificationRule {
    pub fn default_rule(parameter: ParamName, value: f64) -> Self {
        Self {
            parameter,
            when: Vec::new(),
            value,
            priority: 0,
        }
    }

    pub fn is_default(&self) -> bool {
        self.when.is_empty()
    }
}

/// Non-default rules for `name` in evaluation order: priority descending,
/// declaration order on ties.
fn ordered_candidates(name: ParamName, rules: &[StratificationRule]) -> Vec<&StratificationRule> {
    let mut candidates: Vec<(usize, &StratificationRule)> = rules
        .iter()
        .enumerate()
        .filter(|(_, r)| r.parameter == name && !r.is_default())
        .collect();
    candidates.sort_by(|(ia, a), (ib, b)| b.priority.cmp(&a.priority).then(ia.cmp(ib)));
    candidates.into_iter().map(|(_, r)| r).collect()
}

/// Value of the highest-priority matching rule, `None` when only the default applies.
pub fn matching_override(
    name: ParamName,
    attrs: &Attributes,
    rules: &[StratificationRule],
) -> Result<Option<f64>, ConfigError> {
    for rule in ordered_candidates(name, rules) {
        match eval_predicate(&rule.when, attrs) {
            Ok(true) => return Ok(Some(rule.value)),
            Ok(false) => {}
            Err(attribute) => {
                return Err(ConfigError::MissingAttribute {
                    parameter: name.to_string(),
                    attribute,
                })
            }
        }
    }
    Ok(None)
}

/// Resolves `name` for an agent with attributes `attrs`.
pub fn resolve_param(
    name: &str,
    attrs: &Attributes,
    rules: &[StratificationRule],
) -> Result<f64, ConfigError> {
    let param: ParamName = name.parse()?;
    let default = rules
        .iter()
        .find(|r| r.parameter == param && r.is_default())
        .ok_or_else(|| ConfigError::MissingDefaultRule(name.to_string()))?;
    Ok(matching_override(param, attrs, rules)?.unwrap_or(default.value))
}

/// Checks ranges, toggle implications and stratification defaults,
/// collecting every violation.
pub fn validate_model(
    toggles: &ModuleToggles,
    params: &ParameterSet,
    rules: &[StratificationRule],
) -> Result<(), Vec<String>> {
    let mut errors = toggles.violations();
    errors.extend(params.range_violations());

    let mut stratified: BTreeMap<ParamName, usize> = BTreeMap::new();
    for rule in rules {
        let entry = stratified.entry(rule.parameter).or_default();
        if rule.is_default() {
            *entry += 1;
        }
        if !rule.parameter.is_stratifiable() {
            errors.push(format!("{} cannot be stratified", rule.parameter));
        }
        if !rule.parameter.in_range(rule.value) {
            errors.push(format!(
                "{} rule value {} out of range",
                rule.parameter, rule.value
            ));
        }
    }
    for (param, defaults) in stratified {
        match defaults {
            0 => errors.push(format!("{param} has no default rule")),
            1 => {}
            n => errors.push(format!("{param} has {n} default rules")),
        }
    }

    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}
