use crate::compartment::Compartment::{self, *};
use crate::params::ParameterSet;
use crate::scalar::Scalar;

use super::{Fidelity, MeanFieldState, OdeModel, OdeVariant, Rates};

/// Right-hand side `d/dt` of every compartment; inactive compartments get 0.
pub fn derivatives<T: Scalar>(
    state: &MeanFieldState<T>,
    params: &ParameterSet,
    variant: OdeVariant,
) -> [T; Compartment::COUNT] {
    rates_of(state, &Rates::new(params), variant)
}

pub(crate) fn rates_of<T: Scalar>(
    x: &MeanFieldState<T>,
    r: &Rates<T>,
    variant: OdeVariant,
) -> [T; Compartment::COUNT] {
    let model = variant.model;
    let diagram = variant.fidelity == Fidelity::DiagramConsistent && model.has_icu();
    let two = T::one() + T::one();
    let n = x.n;

    let (s, e, i) = (x[S], x[E], x[I]);
    let (et, it, ht) = (x[ET], x[IT], x[HT]);
    let (sl, el, il) = (x[SL], x[EL], x[IL]);
    let (rec, d, v) = (x[R], x[D], x[V]);

    let mut dx = [T::zero(); Compartment::COUNT];

    let infection = r.beta * s * i / n;
    let infection_l = r.beta * sl * il / n;

    // Susceptible pools.
    let mut ds = -infection;
    if model.has_lockdown() {
        ds = ds - r.tau * s + r.mu * sl;
    }
    let mut dsl = -infection_l + r.tau * s - r.mu * sl;
    let mut corpse_infection = T::zero();
    if model.has_corpse() {
        if diagram {
            corpse_infection = r.z * s * d / n;
            ds = ds - corpse_infection;
        } else {
            ds = ds + r.z * d;
        }
    }
    if model.has_immunity() {
        ds = ds + r.s * rec;
    }
    let mut dv = T::zero();
    if model.has_vaccination() {
        ds = ds - r.v * s + r.f * v;
        dsl = dsl - r.v * sl;
        if diagram {
            dv = r.v * s + r.v * sl - r.f * v;
        } else {
            dsl = dsl + r.f * v;
            dv = r.v * s + r.v * sl - two * r.f * v;
        }
    }

    // Exposed.
    let de = infection - r.sigma * e - r.test_e * e;
    let del = infection_l - r.sigma * el - r.test_e * el;
    let et_out = if model.has_icu() && !diagram {
        two * r.sigma * et
    } else {
        r.sigma * et
    };
    let mut det = r.test_e * e - et_out;
    if model.has_lockdown() {
        det = det + r.test_e * el;
    }

    // Infectious, undetected.
    let mut di = r.sigma * e - r.test_i * i - r.gamma * i;
    let mut dil = r.sigma * el - r.test_i * il - r.gamma * il;
    if model.has_death() {
        di = di - r.omega * i;
        dil = dil - r.omega * il;
    }
    di = di + corpse_infection;

    // Tested and hospitalized.
    let mut dit;
    let mut dht = T::zero();
    let mut drec;
    let mut dd = T::zero();
    if !model.has_icu() {
        dit = r.sigma * et + r.test_i * i - r.gamma_t * it;
        if model.has_lockdown() {
            dit = dit + r.test_i * il;
        }
        if model.has_death() {
            dit = dit - r.omega_t * it;
            dd = r.omega * (i + il) + r.omega_t * it;
        }
        drec = if model.has_lockdown() {
            r.gamma * (i + il) + r.gamma_t * it
        } else {
            r.gamma * i + r.gamma_t * it
        };
    } else if diagram {
        dit = r.sigma * et + r.test_i * i - r.gamma_t * it + r.test_i * il
            - r.omega_t * it
            - r.iota * it;
        dht = r.iota * it - r.gamma_t * ht - r.omega_t * ht;
        drec = r.gamma * (i + il) + r.gamma_t * (it + ht);
        dd = r.omega * (i + il) + r.omega_t * (it + ht);
    } else {
        let icu = r.iota * r.b * it;
        dit = r.sigma * et + r.test_i * i - icu - r.gamma * it - r.omega * it;
        dht = r.sigma * et + r.test_i * il + icu - r.gamma_t * ht - r.omega_t * ht;
        drec = r.gamma * (i + il + it) + r.gamma_t * ht;
        dd = r.omega * (i + il + it) + r.omega_t * ht;
    }
    if model.has_corpse() && !diagram {
        dd = dd - r.z * d;
    }
    if model.has_immunity() {
        drec = drec - r.s * rec;
    }

    dx[S.index()] = ds;
    dx[E.index()] = de;
    dx[I.index()] = di;
    dx[ET.index()] = det;
    dx[IT.index()] = dit;
    dx[R.index()] = drec;
    if model.has_lockdown() {
        dx[SL.index()] = dsl;
        dx[EL.index()] = del;
        dx[IL.index()] = dil;
    }
    if model.has_death() {
        dx[D.index()] = dd;
    }
    if model.has_icu() {
        dx[HT.index()] = dht;
    }
    if model.has_vaccination() {
        dx[V.index()] = dv;
    }
    dx
}

/// Parameters that are set but play no role in `model`.
pub fn unused_parameters(params: &ParameterSet, model: OdeModel) -> Vec<String> {
    let mut unused = Vec::new();
    let mut check = |name: &str, value: f64, used: bool| {
        if value != 0.0 && !used {
            unused.push(format!("{name} = {value} is unused by {model}"));
        }
    };
    check("tau", params.tau, model.has_lockdown());
    check("mu", params.mu, model.has_lockdown());
    check("omega", params.omega, model.has_death());
    check("omega_t", params.omega_t, model.has_death());
    check("iota", params.iota, model.has_icu());
    check("b", params.b, model.has_icu());
    check("z", params.z, model.has_corpse());
    check("s", params.s, model.has_immunity());
    check("v", params.v, model.has_vaccination());
    check("f", params.f, model.has_vaccination());
    unused
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seir_params() -> ParameterSet {
        ParameterSet {
            beta: 0.02,
            sigma: 0.2,
            gamma: 0.03,
            ..Default::default()
        }
    }

    /// Hand evaluation of each right-hand side at S=0.99, I=0.01, N=1.
    #[test]
    fn utr_hand_evaluation() {
        let mut x = MeanFieldState::<f64>::zeros(1.0);
        x[S] = 0.99;
        x[I] = 0.01;
        let dx = derivatives(&x, &seir_params(), OdeVariant::as_written(OdeModel::Utr));
        let close = |a: f64, b: f64| (a - b).abs() < 1e-15;
        assert!(close(dx[S.index()], -1.98e-4));
        assert!(close(dx[E.index()], 1.98e-4));
        assert!(close(dx[I.index()], -3.0e-4));
        assert!(close(dx[R.index()], 3.0e-4));
    }

    #[test]
    fn recovered_only_is_stationary() {
        for model in OdeModel::ALL.into_iter().filter(|m| !m.has_immunity()) {
            for fidelity in [Fidelity::AsWritten, Fidelity::DiagramConsistent] {
                let mut x = MeanFieldState::<f64>::zeros(1.0);
                x[R] = 1.0;
                let params = ParameterSet {
                    tau: 0.3,
                    mu: 0.1,
                    omega: 0.05,
                    iota: 0.5,
                    b: 3.0,
                    z: 0.2,
                    ..seir_params()
                };
                let dx = derivatives(&x, &params, OdeVariant::new(model, fidelity));
                // Lockdown entry moves S only, and S is empty.
                assert!(dx.iter().all(|&v| v == 0.0), "{model} {fidelity}: {dx:?}");
            }
        }
    }

    #[test]
    fn no_infection_without_beta() {
        let mut x = MeanFieldState::<f64>::zeros(1.0);
        x[S] = 0.5;
        x[I] = 0.5;
        let params = ParameterSet {
            beta: 0.0,
            ..seir_params()
        };
        let dx = derivatives(&x, &params, OdeVariant::as_written(OdeModel::Utr));
        assert_eq!(dx[S.index()], 0.0);
    }

    fn busy_state() -> MeanFieldState<f64> {
        let mut x = MeanFieldState::<f64>::zeros(10.0);
        for (c, v) in [
            (S, 3.0),
            (E, 0.7),
            (I, 1.1),
            (ET, 0.4),
            (IT, 0.6),
            (HT, 0.3),
            (SL, 1.5),
            (EL, 0.2),
            (IL, 0.3),
            (R, 0.9),
            (D, 0.5),
            (V, 0.5),
        ] {
            x[c] = v;
        }
        x
    }

    fn busy_params() -> ParameterSet {
        ParameterSet {
            beta: 0.3,
            sigma: 0.2,
            gamma: 0.05,
            gamma_t: 0.07,
            theta_e: 0.2,
            theta_i: 0.3,
            kappa_e: 0.5,
            kappa_i: 0.6,
            tau: 0.1,
            mu: 0.02,
            omega: 0.01,
            omega_t: 0.02,
            iota: 0.3,
            b: 0.5,
            z: 0.1,
            s: 0.05,
            v: 0.04,
            f: 0.03,
            ..Default::default()
        }
    }

    #[test]
    fn every_system_is_closed() {
        for model in OdeModel::ALL {
            for fidelity in [Fidelity::AsWritten, Fidelity::DiagramConsistent] {
                let mut x = busy_state();
                for c in Compartment::ALL {
                    if !model.is_active(c) {
                        x[c] = 0.0;
                    }
                }
                let dx = derivatives(&x, &busy_params(), OdeVariant::new(model, fidelity));
                let sum: f64 = dx.iter().sum();
                assert!(sum.abs() < 1e-14, "{model} {fidelity}: sum {sum}");
            }
        }
    }

    #[test]
    fn fidelities_agree_through_utldr() {
        for model in [OdeModel::Utr, OdeModel::Utlr, OdeModel::Utldr] {
            let x = busy_state();
            let a = derivatives(&x, &busy_params(), OdeVariant::as_written(model));
            let b = derivatives(&x, &busy_params(), OdeVariant::diagram(model));
            assert_eq!(a, b, "{model}");
        }
        let x = busy_state();
        let a = derivatives(&x, &busy_params(), OdeVariant::as_written(OdeModel::UtldrIcu));
        let b = derivatives(&x, &busy_params(), OdeVariant::diagram(OdeModel::UtldrIcu));
        assert_ne!(a, b);
    }

    /// Literal transcription of the published ICU system, term by term.
    #[test]
    fn icu_as_written_terms() {
        let x = busy_state();
        let p = busy_params();
        let dx = derivatives(&x, &p, OdeVariant::as_written(OdeModel::UtldrIcu));
        let te = p.theta_e * p.kappa_e;
        let ti = p.theta_i * p.kappa_i;
        let det = te * x[E] - 2.0 * p.sigma * x[ET] + te * x[EL];
        let dit = p.sigma * x[ET] + ti * x[I] - p.iota * p.b * x[IT] - p.gamma * x[IT]
            - p.omega * x[IT];
        let dht = p.sigma * x[ET] + ti * x[IL] + p.iota * p.b * x[IT]
            - p.gamma_t * x[HT]
            - p.omega_t * x[HT];
        let dd = p.omega * (x[I] + x[IL] + x[IT]) + p.omega_t * x[HT];
        for (c, want) in [(ET, det), (IT, dit), (HT, dht), (D, dd)] {
            assert!((dx[c.index()] - want).abs() < 1e-14, "{c}");
        }
    }

    #[test]
    fn vaccination_as_written_terms() {
        let x = busy_state();
        let p = busy_params();
        let dx = derivatives(&x, &p, OdeVariant::as_written(OdeModel::UtldrVaccination));
        let dv = p.v * x[S] + p.v * x[SL] - 2.0 * p.f * x[V];
        let ds = -p.beta * x[S] * x[I] / x.n - p.tau * x[S] + p.mu * x[SL] + p.z * x[D]
            + p.s * x[R]
            - p.v * x[S]
            + p.f * x[V];
        assert!((dx[V.index()] - dv).abs() < 1e-14);
        assert!((dx[S.index()] - ds).abs() < 1e-14);
    }

    #[test]
    fn diagram_icu_uses_tested_rates() {
        let x = busy_state();
        let p = busy_params();
        let dx = derivatives(&x, &p, OdeVariant::diagram(OdeModel::UtldrIcu));
        let dht = p.iota * x[IT] - p.gamma_t * x[HT] - p.omega_t * x[HT];
        assert!((dx[HT.index()] - dht).abs() < 1e-14);
        let det = p.theta_e * p.kappa_e * (x[E] + x[EL]) - p.sigma * x[ET];
        assert!((dx[ET.index()] - det).abs() < 1e-14);
    }

    #[test]
    fn unused_parameters_are_reported() {
        let p = ParameterSet {
            tau: 0.5,
            ..seir_params()
        };
        assert_eq!(unused_parameters(&p, OdeModel::Utr).len(), 1);
        assert!(unused_parameters(&p, OdeModel::Utlr).is_empty());
    }
}
