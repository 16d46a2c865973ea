//! Scenario runner: validation, persistence, determinism and failure handling.

use inflation_core::harness::acceptance::run_criterion;
use inflation_core::harness::{
    evaluate_scenario, run_scenario, BetaSpec, ExperimentConfig, ScenarioKind, ScenarioResults,
    SpectrumSpec,
};
use inflation_core::{Error, NoiseKind, Tier};

fn small(kind: ScenarioKind) -> ExperimentConfig {
    let spectrum = match kind {
        ScenarioKind::RidgeSweep => SpectrumSpec::Isotropic { d: 40 },
        ScenarioKind::Spiked => SpectrumSpec::Spiked { d: 200, spike: 2.0 },
        ScenarioKind::DirectionShrink => SpectrumSpec::DirectionShrink { d: 2000, q: 0.05 },
        ScenarioKind::UnbiasedDivergence => SpectrumSpec::Block { d: 200, q: 0.125 },
        ScenarioKind::MomentsCheck => SpectrumSpec::Isotropic { d: 1 },
        _ => SpectrumSpec::Block { d: 1000, q: 0.1 },
    };
    let n = match kind {
        ScenarioKind::DataSplit => 36,
        ScenarioKind::UnbiasedDivergence => 20,
        _ => 10,
    };
    let mut cfg = ExperimentConfig::new(kind, n, 12, 77, spectrum);
    cfg.noise = NoiseKind::Homoscedastic { sigma: 0.5 };
    match kind {
        ScenarioKind::UnbiasedDivergence => cfg.params.ratios = vec![10, 20],
        ScenarioKind::DirectionShrink | ScenarioKind::Spiked => {
            cfg.beta = BetaSpec::TopK { k: Some(1) };
            cfg.noise = NoiseKind::None;
        }
        ScenarioKind::RidgeSweep => cfg.grid.lambda_per_side = 5,
        ScenarioKind::MomentsCheck => cfg.replicates = 500,
        _ => {}
    }
    cfg
}

#[test]
fn every_scenario_runs_on_a_small_config() {
    for kind in ScenarioKind::ALL {
        let cfg = small(kind);
        let report = evaluate_scenario(&cfg).unwrap_or_else(|e| panic!("{kind}: {e}"));
        assert_eq!(report.scenario, kind);
        assert!(!report.verdicts.is_empty(), "{kind}");
        assert!(report.failures.is_empty(), "{kind}");
    }
}

#[test]
fn run_writes_report_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ScenarioKind::Inflation);
    cfg.out_dir = Some(dir.path().to_path_buf());
    let report = run_scenario(&cfg).unwrap();
    let run = dir.path().join("inflation-77");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["scenario"], "inflation");
    assert_eq!(json["config"]["seed"], 77);
    let csv = std::fs::read_to_string(run.join("inflation_curve.csv")).unwrap();
    assert!(csv.starts_with("control,mean,se\n"));
    assert_eq!(csv.lines().count(), 1 + report.config.grid.c_points);
    assert!(run.join("spectrum.csv").exists() && run.join("spectrum.json").exists());
}

#[test]
fn invalid_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ScenarioKind::Inflation);
    cfg.replicates = 1;
    cfg.out_dir = Some(dir.path().to_path_buf());
    assert!(matches!(run_scenario(&cfg), Err(Error::Config(_))));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let cfg = small(ScenarioKind::DataSplit);
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| evaluate_scenario(&cfg).unwrap())
    };
    let (one, three) = (run(1), run(3));
    assert_eq!(
        serde_json::to_string(&one.results).unwrap(),
        serde_json::to_string(&three.results).unwrap()
    );
    assert_eq!(one.verdicts, three.verdicts);
}

#[test]
fn injected_failure_is_recorded_and_others_survive() {
    let mut cfg = small(ScenarioKind::Inflation);
    cfg.fail_replicate = Some(3);
    let report = evaluate_scenario(&cfg).unwrap();
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].replicate, 3);
    let ScenarioResults::Inflation(r) = &report.results else { panic!("wrong results") };
    assert_eq!(r.min_norm.replicates, cfg.replicates - 1);
}

#[test]
fn config_round_trips_through_toml() {
    for kind in ScenarioKind::ALL {
        let cfg = small(kind).resolved();
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml_string().unwrap(), text);
    }
}

#[test]
fn acceptance_verdicts_are_reproducible() {
    let a = run_criterion(12, Tier::Fast, 5);
    let b = run_criterion(12, Tier::Fast, 5);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert!(a.line().starts_with(if a.passed { "PASS" } else { "FAIL" }));
}
