//! Scenario configuration, orchestration and persistence.
//!
//! A run validates its [`ExperimentConfig`] before drawing anything, executes
//! the scenario on the current rayon pool and writes
//! `<out>/<scenario>-<seed>/report.json` plus one CSV per curve.

pub mod acceptance;
pub mod config;
pub mod report;
mod scenarios;

use std::path::PathBuf;
use std::time::Instant;

pub use acceptance::{run_acceptance_suite, AcceptanceSummary, CriterionOutcome, Tier};
pub use config::{
    BetaSpec, ExperimentConfig, GridPolicy, RidgeOptions, ScenarioKind, ScenarioParams,
    SlackOverrides, SpectrumSpec,
};
pub use report::{ScenarioReport, ScenarioResults, Verdict};

use crate::error::Result;
use report::{write_artifacts, Artifacts, Timing};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "INFLATION_OUT_DIR";

/// Output directory used when the config does not name one.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("results"), PathBuf::from)
}

/// Run a scenario in memory without writing anything.
pub fn evaluate_scenario(config: &ExperimentConfig) -> Result<ScenarioReport> {
    execute(config).map(|(report, _)| report)
}

/// Validate, run and persist a scenario. Nothing is written when
/// validation fails.
pub fn run_scenario(config: &ExperimentConfig) -> Result<ScenarioReport> {
    let (report, artifacts) = execute(config)?;
    let out = config.out_dir.clone().unwrap_or_else(default_out_dir);
    let dir = write_artifacts(&report, &artifacts, &out)?;
    log::info!("wrote {}", dir.display());
    Ok(report)
}

fn execute(config: &ExperimentConfig) -> Result<(ScenarioReport, Artifacts)> {
    config.validate()?;
    let cfg = config.resolved();
    let start = Instant::now();
    let prep = match cfg.scenario {
        ScenarioKind::UnbiasedDivergence | ScenarioKind::MomentsCheck => None,
        _ => Some(scenarios::prepare(&cfg, &cfg.spectrum)?),
    };
    let outcome = match (cfg.scenario, &prep) {
        (ScenarioKind::UnbiasedDivergence, _) => scenarios::divergence(&cfg)?,
        (ScenarioKind::MomentsCheck, _) => scenarios::moments_check(&cfg)?,
        (kind, Some(p)) => match kind {
            ScenarioKind::Inflation => scenarios::inflation(&cfg, p, false)?,
            ScenarioKind::Spiked => scenarios::inflation(&cfg, p, true)?,
            ScenarioKind::RidgeSweep => scenarios::ridge_sweep(&cfg, p)?,
            ScenarioKind::DataSplit => scenarios::data_split_scenario(&cfg, p)?,
            ScenarioKind::DirectionShrink => scenarios::direction_shrink(&cfg, p)?,
            ScenarioKind::TheoryCheck => scenarios::theory_check(&cfg, p)?,
            ScenarioKind::UnbiasedDivergence | ScenarioKind::MomentsCheck => unreachable!(),
        },
        (_, None) => unreachable!("prepared inputs exist for this scenario"),
    };
    let timing = Timing {
        elapsed_secs: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    };
    let (functionals, assumptions, theory, spectrum) = match prep {
        Some(p) => (Some(p.functionals), p.assumptions, p.theory, Some(p.inputs.spectrum)),
        None => (None, Vec::new(), None, None),
    };
    let report = ScenarioReport {
        scenario: cfg.scenario,
        functionals,
        assumptions,
        theory,
        results: outcome.results,
        verdicts: outcome.verdicts,
        failures: outcome.failures,
        skipped: outcome.skipped,
        timing,
        config: cfg,
    };
    for v in report.verdicts.iter().filter(|v| !v.passed) {
        log::info!("{} failed: measured {} required {}", v.id, v.measured, v.required);
    }
    Ok((report, Artifacts { curves: outcome.curves, spectrum }))
}
