use std::path::PathBuf;

use episim::engine::{audit_trace, run_with, Cause, RunOptions, TraceRecord};
use episim::meanfield::Fidelity;
use episim::{parse_scenario, parse_scenario_str, run_meanfield, Compartment, MeanFieldPlan};

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

#[test]
fn shipped_scenarios_parse_and_run_clean() {
    for name in ["seir_ba.json", "utldr_er.json", "regional_synthetic.json"] {
        let exp = parse_scenario(&shipped(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut scenario = exp.agent_scenario().unwrap().clone();
        scenario.iterations = scenario.iterations.min(60);
        let out = run_with(&scenario, 3, &RunOptions { threads: 2, trace: true }).unwrap();
        let report = audit_trace(&out.trace, &scenario);
        assert!(report.is_clean(), "{name}: {:?}", report.messages);
        let n = scenario.agent_count() as f64;
        for k in 0..out.series.len() {
            assert_eq!(out.series.row_total(k), n, "{name} row {k}");
        }
    }
}

#[test]
fn health_workers_stay_out_of_lockdown() {
    let exp = parse_scenario(&shipped("regional_synthetic.json")).unwrap();
    let mut scenario = exp.agent_scenario().unwrap().clone();
    scenario.iterations = 35;
    let out = run_with(&scenario, 1, &RunOptions { threads: 1, trace: true }).unwrap();
    let is_health = |a: usize| {
        scenario.source.attributes(a).get("employment").map(|v| v.to_string()) == Some("health_worker".into())
    };
    let health = (0..scenario.agent_count()).filter(|&a| is_health(a)).count();
    let entries: Vec<u32> = out
        .trace
        .iter()
        .filter_map(|r| match r {
            TraceRecord::Transition { agent, cause: Cause::LockdownEntry, .. } => Some(*agent),
            _ => None,
        })
        .collect();
    assert!(health > 0 && entries.len() > health);
    assert!(entries.iter().all(|&a| !is_health(a as usize)));
}

#[test]
fn meanfield_plan_from_a_scenario_file() {
    let exp = parse_scenario(&shipped("utldr_er.json")).unwrap();
    let cfg = &exp.config;
    let plan = MeanFieldPlan {
        toggles: cfg.model,
        params: cfg.base_params(),
        schedule: cfg.schedule.clone(),
        iterations: cfg.run.iterations,
        initial_infected: cfg.run.initial_infected,
        hash: exp.hash.clone(),
    };
    for fidelity in [Fidelity::AsWritten, Fidelity::DiagramConsistent] {
        let settings = episim::config::MeanFieldConfig {
            fidelity,
            ..cfg.meanfield.clone()
        };
        let out = run_meanfield(&plan, &settings).unwrap();
        assert_eq!(out.series.len(), 151);
        let sl = out.series.column(Compartment::SL).unwrap();
        assert_eq!(sl[50], 0.0);
        assert!(sl[51] > 0.0);
        assert_eq!(sl[101], 0.0);
    }
}

#[test]
fn hash_ignores_formatting_but_not_values() {
    let base = std::env::temp_dir();
    let a = parse_scenario_str(r#"{"params":{"beta":0.1}}"#, &base).unwrap();
    let b = parse_scenario_str("{\n  \"params\": { \"beta\": 0.1 }\n}\n", &base).unwrap();
    let c = parse_scenario_str(r#"{"params":{"beta":0.2}}"#, &base).unwrap();
    assert_eq!(a.hash, b.hash);
    assert_ne!(a.hash, c.hash);
    assert_eq!(a.hash.len(), 16);
}
