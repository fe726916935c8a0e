use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::compartment::Compartment;
use crate::error::SimError;
use crate::params::ParameterSet;
use crate::scalar::Scalar;

use super::rhs::rates_of;
use super::{Fidelity, MeanFieldState, OdeVariant, Rates};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    #[default]
    Rk4,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euler" => Ok(Method::Euler),
            "rk4" => Ok(Method::Rk4),
            _ => Err(format!("unknown integration method `{s}`")),
        }
    }
}

/// A negative component reset to zero after a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampEvent {
    pub step: usize,
    pub compartment: Compartment,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    /// `steps + 1` states, starting with the initial one.
    pub states: Vec<MeanFieldState<T>>,
    pub clamps: Vec<ClampEvent>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn series(&self, c: Compartment) -> Vec<T> {
        self.states.iter().map(|s| s[c]).collect()
    }

    pub fn last(&self) -> &MeanFieldState<T> {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Upper bound on the per-capita outflow rate of any compartment,
/// bounding `I/N` (and `D/N`) by one in the mass-action terms.
pub fn max_outflow_rate(params: &ParameterSet, variant: OdeVariant) -> f64 {
    let m = variant.model;
    let literal = variant.fidelity == Fidelity::AsWritten;
    let r = Rates::<f64>::new(params);
    let on = |flag: bool, x: f64| if flag { x } else { 0.0 };

    let s = r.beta
        + on(m.has_lockdown(), r.tau)
        + on(m.has_vaccination(), r.v)
        + on(m.has_corpse() && !literal, r.z);
    let sl = on(m.has_lockdown(), r.beta + r.mu + on(m.has_vaccination(), r.v));
    let e = r.sigma + r.test_e;
    let et = on(m.has_icu() && literal, r.sigma) + r.sigma;
    let i = r.test_i + r.gamma + on(m.has_death(), r.omega);
    let it = if m.has_icu() && literal {
        r.iota * r.b + r.gamma + r.omega
    } else {
        r.gamma_t + on(m.has_death(), r.omega_t) + on(m.has_icu(), r.iota)
    };
    let ht = on(m.has_icu(), r.gamma_t + r.omega_t);
    let rec = on(m.has_immunity(), r.s);
    let d = on(m.has_corpse() && literal, r.z);
    let v = on(m.has_vaccination(), if literal { 2.0 * r.f } else { r.f });

    [s, sl, e, et, i, it, ht, rec, d, v]
        .into_iter()
        .fold(0.0, f64::max)
}

fn axpy<T: Scalar>(
    x: &MeanFieldState<T>,
    h: T,
    k: &[T; Compartment::COUNT],
) -> MeanFieldState<T> {
    let mut out = *x;
    for c in Compartment::ALL {
        out[c] = x[c] + h * k[c.index()];
    }
    out
}

/// Fixed-step integration of `variant` from `state0`.
///
/// Negative components produced by a step are clamped to zero and logged;
/// non-finite values abort with the offending step.
pub fn integrate<T: Scalar>(
    state0: &MeanFieldState<T>,
    params: &ParameterSet,
    variant: OdeVariant,
    dt: T,
    steps: usize,
    method: Method,
) -> Result<Trajectory<T>, SimError> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(SimError::Invalid(format!("dt = {dt} must be positive")));
    }
    if method == Method::Euler {
        let bound = dt.as_f64() * max_outflow_rate(params, variant);
        if bound >= 1.0 {
            return Err(SimError::StepSize(bound));
        }
    }

    let rates = Rates::<T>::new(params);
    let f = |x: &MeanFieldState<T>| rates_of(x, &rates, variant);
    let half = dt / (T::one() + T::one());
    let sixth = dt / T::of(6.0);
    let two = T::one() + T::one();

    let mut states = Vec::with_capacity(steps + 1);
    let mut clamps = Vec::new();
    states.push(*state0);
    let mut x = *state0;
    for step in 1..=steps {
        x = match method {
            Method::Euler => axpy(&x, dt, &f(&x)),
            Method::Rk4 => {
                let k1 = f(&x);
                let k2 = f(&axpy(&x, half, &k1));
                let k3 = f(&axpy(&x, half, &k2));
                let k4 = f(&axpy(&x, dt, &k3));
                let mut next = x;
                for c in Compartment::ALL {
                    let i = c.index();
                    next[c] = x[c] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
                }
                next
            }
        };
        for c in Compartment::ALL {
            let v = x[c];
            if !v.is_finite() {
                return Err(SimError::NonFinite {
                    step,
                    compartment: c,
                });
            }
            if v < T::zero() {
                clamps.push(ClampEvent {
                    step,
                    compartment: c,
                    value: v.as_f64(),
                });
                x[c] = T::zero();
            }
        }
        states.push(x);
    }
    Ok(Trajectory { states, clamps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::OdeModel;
    use Compartment::*;

    fn seir() -> ParameterSet {
        ParameterSet {
            beta: 0.02,
            sigma: 0.2,
            gamma: 0.03,
            ..Default::default()
        }
    }

    #[test]
    fn zero_steps_is_identity() {
        let x0 = MeanFieldState::<f64>::seeded(1.0, 0.01);
        let traj = integrate(&x0, &seir(), OdeVariant::diagram(OdeModel::Utr), 1.0, 0, Method::Rk4)
            .unwrap();
        assert_eq!(traj.states, vec![x0]);
    }

    #[test]
    fn disease_free_equilibrium() {
        let x0 = MeanFieldState::<f64>::seeded(100.0, 0.0);
        let params = ParameterSet {
            tau: 0.0,
            ..seir()
        };
        for model in OdeModel::ALL {
            for method in [Method::Euler, Method::Rk4] {
                let traj = integrate(&x0, &params, OdeVariant::as_written(model), 1.0, 50, method)
                    .unwrap();
                assert!(traj.states.iter().all(|s| *s == x0), "{model}");
            }
        }
    }

    #[test]
    fn euler_step_size_guard() {
        let x0 = MeanFieldState::<f64>::seeded(1.0, 0.01);
        let params = ParameterSet {
            sigma: 0.9,
            theta_e: 1.0,
            kappa_e: 0.5,
            ..seir()
        };
        let err = integrate(&x0, &params, OdeVariant::diagram(OdeModel::Utr), 1.0, 10, Method::Euler)
            .unwrap_err();
        assert!(matches!(err, SimError::StepSize(b) if (b - 1.4).abs() < 1e-12));
        assert!(integrate(&x0, &params, OdeVariant::diagram(OdeModel::Utr), 0.5, 10, Method::Euler)
            .is_ok());
    }

    #[test]
    fn non_finite_state_names_step() {
        let mut x0 = MeanFieldState::<f64>::seeded(1.0, 0.01);
        x0[E] = f64::NAN;
        let err = integrate(&x0, &seir(), OdeVariant::diagram(OdeModel::Utr), 1.0, 3, Method::Rk4)
            .unwrap_err();
        assert!(matches!(err, SimError::NonFinite { step: 1, .. }));
    }

    #[test]
    fn as_written_icu_clamps_negative_transients() {
        // `iota * b` well above one drains I_T faster than one step can carry.
        let mut x0 = MeanFieldState::<f64>::zeros(1.0);
        x0[S] = 0.5;
        x0[IT] = 0.5;
        let params = ParameterSet {
            iota: 1.0,
            b: 5.0,
            ..seir()
        };
        let traj = integrate(
            &x0,
            &params,
            OdeVariant::as_written(OdeModel::UtldrIcu),
            1.0,
            5,
            Method::Rk4,
        )
        .unwrap();
        assert!(!traj.clamps.is_empty());
        assert!(traj.states.iter().all(|s| s.values().iter().all(|&v| v >= 0.0)));
    }

    #[test]
    fn generic_over_f32() {
        let x0 = MeanFieldState::<f32>::seeded(1.0, 1e-2);
        let traj = integrate(&x0, &seir(), OdeVariant::diagram(OdeModel::Utr), 1.0f32, 100, Method::Rk4)
            .unwrap();
        let wide = integrate(
            &x0.cast::<f64>(),
            &seir(),
            OdeVariant::diagram(OdeModel::Utr),
            1.0,
            100,
            Method::Rk4,
        )
        .unwrap();
        for (a, b) in traj.states.iter().zip(&wide.states) {
            for c in Compartment::ALL {
                assert!((f64::from(a[c]) - b[c]).abs() < 1e-5);
            }
        }
    }
}
