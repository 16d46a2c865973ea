use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{default_splits, DEFAULT_RIDGE_MARGIN};
use crate::risk::RidgeRisk;
use crate::sampling::{make_beta_custom, make_beta_topk, BetaCoefficients, NoiseKind, NoiseModel};
use crate::spectrum::{
    make_block_spectrum, make_direction_shrink_spectrum, make_power_law_spectrum,
    make_spiked_spectrum, make_two_regime_spectrum, AssumptionSlack, Spectrum,
};
use crate::theory::SlackPolicy;

/// Which experiment to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Inflation,
    RidgeSweep,
    DataSplit,
    Spiked,
    UnbiasedDivergence,
    DirectionShrink,
    TheoryCheck,
    MomentsCheck,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 8] = [
        ScenarioKind::Inflation,
        ScenarioKind::RidgeSweep,
        ScenarioKind::DataSplit,
        ScenarioKind::Spiked,
        ScenarioKind::UnbiasedDivergence,
        ScenarioKind::DirectionShrink,
        ScenarioKind::TheoryCheck,
        ScenarioKind::MomentsCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Inflation => "inflation",
            ScenarioKind::RidgeSweep => "ridge_sweep",
            ScenarioKind::DataSplit => "data_split",
            ScenarioKind::Spiked => "spiked",
            ScenarioKind::UnbiasedDivergence => "unbiased_divergence",
            ScenarioKind::DirectionShrink => "direction_shrink",
            ScenarioKind::TheoryCheck => "theory_check",
            ScenarioKind::MomentsCheck => "moments_check",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ScenarioKind::Inflation => "Monte Carlo G(c theta_MN), empirical c_opt vs prediction",
            ScenarioKind::RidgeSweep => "ridge risk over signed penalties, derivative at zero",
            ScenarioKind::DataSplit => "data-splitting estimator with plug-in c*",
            ScenarioKind::Spiked => "inflation under a rank-one spiked covariance",
            ScenarioKind::UnbiasedDivergence => "risk of the debiased interpolator as d/n grows",
            ScenarioKind::DirectionShrink => "risk of shrinking toward a fixed direction",
            ScenarioKind::TheoryCheck => "Monte Carlo vs analytic bounds on projection moments",
            ScenarioKind::MomentsCheck => "Gaussian quadratic-form moments vs closed forms",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario {s:?}")))
    }
}

/// Spectrum constructor and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumSpec {
    Isotropic { d: usize },
    Block { d: usize, q: f64 },
    PowerLaw {
        d: usize,
        a: f64,
        q: f64,
        #[serde(default)]
        enforce: bool,
    },
    TwoRegime { d: usize, q: f64, a_min: f64, a0: f64, a1: f64, a2: f64 },
    Spiked { d: usize, spike: f64 },
    DirectionShrink { d: usize, q: f64 },
    Custom { eigenvalues: Vec<f64>, normalize: bool },
}

impl SpectrumSpec {
    pub fn build(&self, n: usize) -> Result<Spectrum> {
        match self {
            SpectrumSpec::Isotropic { d } => Spectrum::isotropic(*d),
            SpectrumSpec::Block { d, q } => make_block_spectrum(n, *d, *q),
            SpectrumSpec::PowerLaw { d, a, q, enforce } => {
                make_power_law_spectrum(n, *d, *a, *q, *enforce)
            }
            SpectrumSpec::TwoRegime { d, q, a_min, a0, a1, a2 } => {
                make_two_regime_spectrum(n, *d, *q, *a_min, *a0, *a1, *a2)
            }
            SpectrumSpec::Spiked { d, spike } => make_spiked_spectrum(*d, *spike),
            SpectrumSpec::DirectionShrink { d, q } => make_direction_shrink_spectrum(n, *d, *q),
            SpectrumSpec::Custom { eigenvalues, normalize } => {
                Spectrum::from_eigenvalues(eigenvalues.clone(), *normalize)
            }
        }
    }

    pub fn d(&self) -> usize {
        match self {
            SpectrumSpec::Isotropic { d }
            | SpectrumSpec::Block { d, .. }
            | SpectrumSpec::PowerLaw { d, .. }
            | SpectrumSpec::TwoRegime { d, .. }
            | SpectrumSpec::Spiked { d, .. }
            | SpectrumSpec::DirectionShrink { d, .. } => *d,
            SpectrumSpec::Custom { eigenvalues, .. } => eigenvalues.len(),
        }
    }

    /// Same constructor with a different dimension.
    pub fn with_d(&self, new_d: usize) -> Result<Self> {
        let mut out = self.clone();
        match &mut out {
            SpectrumSpec::Isotropic { d }
            | SpectrumSpec::Block { d, .. }
            | SpectrumSpec::PowerLaw { d, .. }
            | SpectrumSpec::TwoRegime { d, .. }
            | SpectrumSpec::Spiked { d, .. }
            | SpectrumSpec::DirectionShrink { d, .. } => *d = new_d,
            SpectrumSpec::Custom { .. } => {
                return Err(Error::Config("a custom spectrum has a fixed dimension".into()))
            }
        }
        Ok(out)
    }
}

/// How the true parameter is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaSpec {
    /// Top `k` directions; `k` defaults to `min(n, d)`.
    TopK { k: Option<usize> },
    Custom { coeffs: Vec<f64>, normalize: bool },
}

impl Default for BetaSpec {
    fn default() -> Self {
        BetaSpec::TopK { k: None }
    }
}

impl BetaSpec {
    pub fn build(&self, s: &Spectrum, n: usize) -> Result<BetaCoefficients> {
        match self {
            BetaSpec::TopK { k } => make_beta_topk(s, k.unwrap_or(n.min(s.d()))),
            BetaSpec::Custom { coeffs, normalize } => make_beta_custom(s, coeffs, *normalize),
        }
    }
}

/// Grid policies for the curve-producing scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridPolicy {
    /// Number of uniform inflation constants.
    pub c_points: usize,
    /// Upper end of the inflation grid; defaults to `2 max(1, c_theory)`.
    pub c_max: Option<f64>,
    /// Explicit ridge penalties. When absent a signed log grid is built.
    pub lambdas: Option<Vec<f64>>,
    pub lambda_per_side: usize,
    /// Negative extent as a fraction of the pilot median of `min_eig`.
    pub lambda_neg_fraction: f64,
    /// Positive extent as a multiple of the pilot mean of `tr(XXᵀ)/n`.
    pub lambda_pos_factor: f64,
    pub pilot_replicates: usize,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self {
            c_points: 101,
            c_max: None,
            lambdas: None,
            lambda_per_side: 25,
            lambda_neg_fraction: 0.9,
            lambda_pos_factor: 10.0,
            pilot_replicates: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RidgeOptions {
    pub margin: f64,
    pub risk: RidgeRisk,
    /// Finite-difference step as a fraction of `tr(XXᵀ)/n`.
    pub fd_step: f64,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        Self { margin: DEFAULT_RIDGE_MARGIN, risk: RidgeRisk::Conditional, fd_step: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SlackOverrides {
    pub theory: SlackPolicy,
    pub assumptions: AssumptionSlack,
}

/// Parameters used only by some scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    /// Values of `d/n` for the divergence scenario.
    pub ratios: Vec<usize>,
    /// Mixing weight toward the fixed direction.
    pub shrink_c: f64,
    /// Matrix dimension for the moments check.
    pub moments_dim: usize,
    /// Floor constant for the data-split minimum risk check.
    pub ds_floor_constant: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self { ratios: vec![10, 100, 1000], shrink_c: 0.5, moments_dim: 5, ds_floor_constant: 0.25 }
    }
}

/// One experiment. Parsed from TOML; every default is filled in by
/// [`ExperimentConfig::resolved`] so reports are self-contained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    pub n: usize,
    /// Monte Carlo replicates; draws for the moments check.
    pub replicates: usize,
    pub seed: u64,
    pub spectrum: SpectrumSpec,
    #[serde(default)]
    pub beta: BetaSpec,
    #[serde(default = "default_noise")]
    pub noise: NoiseKind,
    /// Number of data splits; defaults to `ceil(sqrt(n))`.
    #[serde(default)]
    pub splits: Option<usize>,
    #[serde(default)]
    pub grid: GridPolicy,
    #[serde(default)]
    pub ridge: RidgeOptions,
    #[serde(default)]
    pub slack: SlackOverrides,
    #[serde(default)]
    pub params: ScenarioParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Test hook: make this replicate fail.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_replicate: Option<u64>,
}

fn default_noise() -> NoiseKind {
    NoiseKind::None
}

impl ExperimentConfig {
    /// Minimal config with every optional part at its default.
    pub fn new(scenario: ScenarioKind, n: usize, replicates: usize, seed: u64, spectrum: SpectrumSpec) -> Self {
        Self {
            scenario,
            n,
            replicates,
            seed,
            spectrum,
            beta: BetaSpec::default(),
            noise: NoiseKind::None,
            splits: None,
            grid: GridPolicy::default(),
            ridge: RidgeOptions::default(),
            slack: SlackOverrides::default(),
            params: ScenarioParams::default(),
            out_dir: None,
            fail_replicate: None,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Copy with the scenario-dependent defaults made explicit.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        if let BetaSpec::TopK { k: None } = out.beta {
            out.beta = BetaSpec::TopK { k: Some(self.n.min(self.spectrum.d())) };
        }
        if out.splits.is_none() {
            out.splits = Some(default_splits(self.n));
        }
        out
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.noise.clone()).map_err(|e| Error::Config(e.to_string()))
    }

    /// Check everything that can be checked without sampling.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.replicates < 2 {
            return bad(format!("replicates must be at least 2, got {}", self.replicates));
        }
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        self.noise_model()?;
        if self.scenario == ScenarioKind::MomentsCheck {
            let k = self.params.moments_dim;
            if k == 0 || k > 16 {
                return bad(format!("moments_dim must lie in [1, 16], got {k}"));
            }
            return Ok(());
        }
        let wrap = |e: Error| Error::Config(e.to_string());
        if self.scenario == ScenarioKind::UnbiasedDivergence {
            if self.params.ratios.is_empty() {
                return bad("the divergence scenario needs at least one ratio".into());
            }
            for &r in &self.params.ratios {
                let spec = self.spectrum.with_d(r * self.n)?;
                let s = spec.build(self.n).map_err(wrap)?;
                self.beta.build(&s, self.n).map_err(wrap)?;
            }
            return Ok(());
        }
        let s = self.spectrum.build(self.n).map_err(wrap)?;
        self.beta.build(&s, self.n).map_err(wrap)?;
        if self.n > s.d() {
            return bad(format!("need n <= d, got n={} and d={}", self.n, s.d()));
        }
        match self.scenario {
            ScenarioKind::DataSplit => {
                let splits = self.resolved().splits.unwrap_or(2);
                let sizes = crate::estimators::split_sizes(self.n, splits).map_err(wrap)?;
                if sizes[..sizes.len() - 1].iter().any(|&b| b >= s.d()) {
                    return bad("every fitted data-split block must be smaller than d".into());
                }
            }
            ScenarioKind::TheoryCheck => {
                if matches!(self.noise, NoiseKind::Heteroscedastic { .. }) {
                    return bad("theory_check needs noise independent of the design".into());
                }
                if self.n < 2 {
                    return bad("theory_check needs n >= 2".into());
                }
            }
            ScenarioKind::RidgeSweep => {
                let m = self.ridge.margin;
                if !(0.0..1.0).contains(&m) {
                    return bad(format!("ridge margin must lie in [0, 1), got {m}"));
                }
                if let Some(l) = &self.grid.lambdas {
                    if l.is_empty() || l.windows(2).any(|w| w[0] >= w[1]) {
                        return bad("lambda grid must be non-empty and strictly increasing".into());
                    }
                }
            }
            ScenarioKind::Inflation if self.grid.c_points < 2 => {
                return bad("c_points must be at least 2".into());
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
scenario = "inflation"
n = 20
replicates = 10
seed = 3

[spectrum]
kind = "block"
d = 2000
q = 0.1

[noise]
kind = "homoscedastic"
sigma = 0.5
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.scenario, ScenarioKind::Inflation);
        assert_eq!(cfg.noise, NoiseKind::Homoscedastic { sigma: 0.5 });
        cfg.validate().unwrap();
        let resolved = cfg.resolved();
        assert_eq!(resolved.beta, BetaSpec::TopK { k: Some(20) });
        let text = resolved.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, resolved);
        assert_eq!(back.to_toml_string().unwrap(), text);
    }

    #[test]
    fn rejects_bad_configs() {
        let one = SAMPLE.replace("replicates = 10", "replicates = 1");
        let cfg = ExperimentConfig::from_toml_str(&one).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let typo = SAMPLE.replace("seed = 3", "sed = 3");
        assert!(ExperimentConfig::from_toml_str(&typo).is_err());
        let unsep = SAMPLE.replace("d = 2000", "d = 30");
        assert!(ExperimentConfig::from_toml_str(&unsep).unwrap().validate().is_err());
    }

    #[test]
    fn scenario_names_round_trip() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.name().parse::<ScenarioKind>().unwrap(), k);
        }
        assert!("nope".parse::<ScenarioKind>().is_err());
    }
}
