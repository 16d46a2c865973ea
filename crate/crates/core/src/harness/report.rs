use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::risk::{ReplicateFailure, RiskCurve, RiskSummary};
use crate::spectrum::{AssumptionReport, Functionals, Spectrum};
use crate::stats::MeanSe;
use crate::theory::{BoundInterval, TheoryPrediction};

use super::config::{ExperimentConfig, ScenarioKind};

/// One pass/fail check with the value it was decided on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub id: String,
    pub measured: f64,
    pub required: String,
    pub passed: bool,
}

impl Verdict {
    pub fn new(id: impl Into<String>, measured: f64, required: impl Into<String>, passed: bool) -> Self {
        Self { id: id.into(), measured, required: required.into(), passed }
    }

    /// `measured <= bound`.
    pub fn at_most(id: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self::new(id, measured, format!("<= {bound}"), measured <= bound)
    }

    /// `measured >= bound`.
    pub fn at_least(id: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self::new(id, measured, format!(">= {bound}"), measured >= bound)
    }

    /// `measured` inside `interval` widened by `widen` on both sides.
    pub fn within(id: impl Into<String>, measured: f64, interval: &BoundInterval, widen: f64) -> Self {
        Self::new(
            id,
            measured,
            format!("in [{}, {}] widened by {widen}", interval.lower, interval.upper),
            interval.contains(measured, widen),
        )
    }
}

/// A Monte Carlo mean compared against an analytic interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub mc: MeanSe,
    pub bound: Option<BoundInterval>,
    /// Why the bound could not be evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unavailable: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InflationResults {
    pub min_norm: RiskSummary,
    pub c_hat: f64,
    pub c_hat_se: f64,
    pub g_one: f64,
    pub g_one_se: f64,
    pub g_c_hat: f64,
    pub g_c_hat_se: f64,
    pub ratio: f64,
    pub curve: RiskCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeResults {
    pub curve: RiskCurve,
    pub skipped: Vec<usize>,
    pub argmins: Vec<f64>,
    pub argmin_positive_fraction: f64,
    /// Exact derivative at zero, per replicate. Empty unless `Σ = I` with
    /// design-independent noise.
    pub derivatives: Vec<f64>,
    pub derivative_negative_fraction: Option<f64>,
    /// Largest relative gap between the exact and finite-difference slopes.
    pub fd_max_rel_error: Option<f64>,
    pub pilot_median_min_eig: Option<f64>,
    pub pilot_mean_scale: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSplitResults {
    pub splits: usize,
    pub min_norm: RiskSummary,
    pub data_split: RiskSummary,
    /// Plug-in constant over replicates.
    pub c_star_hat: MeanSe,
    /// `a/b` of the data-split estimator from the Monte Carlo moments.
    pub c_star_mc: f64,
    pub c_opt_min_norm: f64,
    /// `G(ĉ* θ_ds)` with each replicate's own plug-in constant.
    pub g_plug_in: MeanSe,
    pub g_opt_min_norm: f64,
    pub g_opt_min_norm_se: f64,
    pub g_min_data_split: f64,
    pub floor: f64,
    pub fallbacks: usize,
    pub curve: RiskCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergencePoint {
    pub ratio: usize,
    pub d: usize,
    pub g_unbiased: f64,
    pub g_unbiased_se: f64,
    pub g_min_norm: f64,
    pub g_min_norm_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShrinkResults {
    pub c: f64,
    pub g: f64,
    pub g_se: f64,
    pub g_min_norm: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryCheckResults {
    pub checks: Vec<BoundCheck>,
    /// Largest `|tr(Π_X) - n|` over draws.
    pub max_projection_trace_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentsResults {
    pub dim: usize,
    pub draws: usize,
    pub second_closed: f64,
    pub second_mc: MeanSe,
    pub third_closed: f64,
    pub third_mc: MeanSe,
}

/// Scenario-specific numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioResults {
    Inflation(InflationResults),
    Ridge(RidgeResults),
    DataSplit(DataSplitResults),
    Divergence { points: Vec<DivergencePoint> },
    Shrink(ShrinkResults),
    Theory(TheoryCheckResults),
    Moments(MomentsResults),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_secs: f64,
    pub threads: usize,
}

/// Everything a scenario run produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: ScenarioKind,
    /// The resolved configuration, defaults included.
    pub config: ExperimentConfig,
    pub functionals: Option<Functionals>,
    pub assumptions: Vec<AssumptionReport>,
    pub theory: Option<TheoryPrediction>,
    pub results: ScenarioResults,
    pub verdicts: Vec<Verdict>,
    pub failures: Vec<ReplicateFailure>,
    /// Replicate-points skipped by grid admissibility rules.
    pub skipped: usize,
    pub timing: Timing,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn verdict(&self, id: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.id == id)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Run directory `<out>/<scenario>-<seed>`.
    pub fn run_dir(&self, out: &Path) -> PathBuf {
        out.join(format!("{}-{}", self.scenario, self.config.seed))
    }
}

/// Curves and the spectrum that go next to `report.json`.
pub(crate) struct Artifacts {
    pub curves: Vec<(String, RiskCurve)>,
    pub spectrum: Option<Spectrum>,
}

pub(crate) fn write_artifacts(report: &ScenarioReport, artifacts: &Artifacts, out: &Path) -> Result<PathBuf> {
    let dir = report.run_dir(out);
    fs::create_dir_all(&dir)?;
    for (name, curve) in &artifacts.curves {
        curve.write_csv(&dir.join(format!("{name}.csv")))?;
    }
    if let Some(s) = &artifacts.spectrum {
        s.write(&dir.join("spectrum.csv"), &dir.join("spectrum.json"), Some(report.config.n))?;
    }
    fs::write(dir.join("report.json"), report.to_json()?)?;
    Ok(dir)
}
