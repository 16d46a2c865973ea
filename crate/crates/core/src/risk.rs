//! Exact per-draw risk, Monte Carlo generalization error and risk curves.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{
    self, data_split, gram_factorize, min_norm, ridge_lower_bound, EstimateVector, GramFactor,
    Provenance,
};
use crate::linalg;
use crate::rng::{Purpose, SeedLineage};
use crate::sampling::{sample_design, BetaCoefficients, DesignSample, NoiseModel};
use crate::spectrum::Spectrum;
use crate::stats::{covariance, mean, pairwise_sum};

/// `(θ - β)ᵀ Σ (θ - β)` in the eigenbasis.
pub fn excess_risk(theta: &EstimateVector, beta: &BetaCoefficients, s: &Spectrum) -> Result<f64> {
    excess_risk_slice(theta.as_slice(), beta.coeffs(), s)
}

pub(crate) fn excess_risk_slice(theta: &[f64], beta: &[f64], s: &Spectrum) -> Result<f64> {
    if theta.len() != s.d() {
        return Err(Error::DimensionMismatch { expected: s.d(), found: theta.len() });
    }
    if beta.len() != s.d() {
        return Err(Error::DimensionMismatch { expected: s.d(), found: beta.len() });
    }
    let terms: Vec<f64> = s
        .eigenvalues()
        .iter()
        .zip(theta.iter().zip(beta))
        .map(|(l, (t, c))| l * (t - c) * (t - c))
        .collect();
    Ok(pairwise_sum(&terms))
}

/// `θᵀ Σ β` and `θᵀ Σ θ`.
pub fn sigma_moments(theta: &[f64], beta: &[f64], s: &Spectrum) -> (f64, f64) {
    let ev = s.eigenvalues();
    let a: Vec<f64> = ev.iter().zip(theta.iter().zip(beta)).map(|(l, (t, c))| l * t * c).collect();
    let b: Vec<f64> = ev.iter().zip(theta).map(|(l, t)| l * t * t).collect();
    (pairwise_sum(&a), pairwise_sum(&b))
}

/// Everything that defines the data-generating process.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioInputs {
    pub spectrum: Spectrum,
    pub beta: BetaCoefficients,
    pub noise: NoiseModel,
    pub n: usize,
}

impl ScenarioInputs {
    pub fn new(spectrum: Spectrum, beta: BetaCoefficients, noise: NoiseModel, n: usize) -> Result<Self> {
        if beta.d() != spectrum.d() {
            return Err(Error::DimensionMismatch { expected: spectrum.d(), found: beta.d() });
        }
        if n == 0 {
            return Err(invalid("n must be at least 1"));
        }
        Ok(Self { spectrum, beta, noise, n })
    }

    pub fn sample(&self, lineage: SeedLineage) -> Result<DesignSample> {
        sample_design(&self.spectrum, self.n, &self.noise, &self.beta, lineage)
    }
}

/// How to turn one sample into an estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorRecipe {
    MinNorm,
    Ridge { lambda: f64 },
    Inflated { c: f64, base: Box<EstimatorRecipe> },
    /// `θ_ds`; the holdout is not used.
    DataSplit { splits: usize },
    UnbiasedAttempt,
    /// `(1-c) θ_MN + c e_direction`.
    ShrinkToward { c: f64, direction: usize },
    Zero,
    /// The true parameter itself.
    Oracle,
}

impl EstimatorRecipe {
    pub fn estimate(&self, inputs: &ScenarioInputs, sample: &DesignSample) -> Result<EstimateVector> {
        let d = inputs.spectrum.d();
        match self {
            EstimatorRecipe::MinNorm => min_norm(sample, &gram_factorize(sample)?),
            EstimatorRecipe::Ridge { lambda } => {
                estimators::ridge(sample, &gram_factorize(sample)?, *lambda)
            }
            EstimatorRecipe::Inflated { c, base } => Ok(base.estimate(inputs, sample)?.inflate(*c)),
            EstimatorRecipe::DataSplit { splits } => Ok(data_split(sample, *splits)?.theta),
            EstimatorRecipe::UnbiasedAttempt => {
                let mn = min_norm(sample, &gram_factorize(sample)?)?;
                estimators::unbiased_attempt(&mn, &inputs.spectrum, inputs.n)
            }
            EstimatorRecipe::ShrinkToward { c, direction } => {
                if *direction >= d {
                    return Err(invalid(format!("direction index {direction} out of range")));
                }
                let mn = min_norm(sample, &gram_factorize(sample)?)?;
                let mut v = DVector::zeros(d);
                v[*direction] = 1.0;
                estimators::shrink_toward(&mn, &v, *c)
            }
            EstimatorRecipe::Zero => Ok(EstimateVector::new(DVector::zeros(d), Provenance::External)),
            EstimatorRecipe::Oracle => Ok(EstimateVector::new(inputs.beta.as_dvector(), Provenance::External)),
        }
    }
}

/// Replicate count, master seed and an optional injected failure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McPlan {
    pub replicates: usize,
    pub seed: u64,
    /// Test hook: this replicate index fails deliberately.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_replicate: Option<u64>,
}

impl McPlan {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self { replicates, seed, fail_replicate: None }
    }
}

/// A replicate that was excluded from the aggregate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: u64,
    pub reason: String,
}

/// Per-replicate outputs in replicate order, successes only.
#[derive(Clone, Debug)]
pub struct Replicates<T> {
    pub values: Vec<T>,
    pub failures: Vec<ReplicateFailure>,
}

/// Run `f` once per replicate in parallel. Each call gets the design-purpose
/// lineage of its replicate; results come back in replicate order.
pub fn run_replicates<T, F>(plan: &McPlan, f: F) -> Replicates<T>
where
    T: Send,
    F: Fn(SeedLineage) -> Result<T> + Sync,
{
    let outcomes: Vec<(u64, Result<T>)> = (0..plan.replicates as u64)
        .into_par_iter()
        .map(|r| {
            if plan.fail_replicate == Some(r) {
                let e = Error::ReplicateFailed { replicate: r, reason: "injected failure".into() };
                return (r, Err(e));
            }
            (r, f(SeedLineage::new(plan.seed, Purpose::Design, r)))
        })
        .collect();
    let mut values = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (r, out) in outcomes {
        match out {
            Ok(v) => values.push(v),
            Err(e) => {
                log::warn!("replicate {r} excluded: {e}");
                failures.push(ReplicateFailure { replicate: r, reason: e.to_string() });
            }
        }
    }
    Replicates { values, failures }
}

/// Monte Carlo moments `a = θᵀΣβ` and `b = θᵀΣθ` of an estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskSummary {
    pub a_mean: f64,
    pub a_se: f64,
    pub b_mean: f64,
    pub b_se: f64,
    /// Covariance of the two sample means.
    pub ab_cov: f64,
    pub signal: f64,
    pub replicates: usize,
    pub failures: Vec<ReplicateFailure>,
}

impl RiskSummary {
    /// Build from per-replicate `(a, b)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)], signal: f64, failures: Vec<ReplicateFailure>) -> Result<Self> {
        let r = pairs.len();
        if r < 2 {
            return Err(Error::Degenerate(format!("only {r} successful replicates")));
        }
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let rf = r as f64;
        Ok(Self {
            a_mean: mean(&a),
            a_se: (covariance(&a, &a) / rf).sqrt(),
            b_mean: mean(&b),
            b_se: (covariance(&b, &b) / rf).sqrt(),
            ab_cov: covariance(&a, &b) / rf,
            signal,
            replicates: r,
            failures,
        })
    }

    /// `G(c) = signal - 2c a + c² b`.
    pub fn g(&self, c: f64) -> f64 {
        self.signal - 2.0 * c * self.a_mean + c * c * self.b_mean
    }

    /// Standard error of `G(c)`.
    pub fn g_se(&self, c: f64) -> f64 {
        let v = 4.0 * c * c * self.a_se * self.a_se - 4.0 * c * c * c * self.ab_cov
            + c.powi(4) * self.b_se * self.b_se;
        v.max(0.0).sqrt()
    }

    /// Summary of the estimator scaled by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            a_mean: s * self.a_mean,
            a_se: s.abs() * self.a_se,
            b_mean: s * s * self.b_mean,
            b_se: s * s * self.b_se,
            ab_cov: s * s * s * self.ab_cov,
            ..self.clone()
        }
    }
}

/// Monte Carlo moments of `recipe` over `replicates` independent samples.
pub fn mc_risk_summary(
    inputs: &ScenarioInputs,
    recipe: &EstimatorRecipe,
    replicates: usize,
    seed: u64,
) -> Result<RiskSummary> {
    mc_risk_summary_with(inputs, recipe, &McPlan::new(replicates, seed))
}

pub fn mc_risk_summary_with(
    inputs: &ScenarioInputs,
    recipe: &EstimatorRecipe,
    plan: &McPlan,
) -> Result<RiskSummary> {
    if plan.replicates < 2 {
        return Err(invalid("need at least 2 replicates"));
    }
    let out = run_replicates(plan, |lin| {
        let sample = inputs.sample(lin)?;
        let theta = recipe.estimate(inputs, &sample)?;
        Ok(sigma_moments(theta.as_slice(), inputs.beta.coeffs(), &inputs.spectrum))
    });
    RiskSummary::from_pairs(&out.values, inputs.beta.signal(&inputs.spectrum), out.failures)
}

/// `ĉ = a/b` with a delta-method standard error.
pub fn empirical_c_opt(rs: &RiskSummary) -> Result<(f64, f64)> {
    if !(rs.b_mean > 0.0) {
        return Err(Error::Degenerate(format!("b_mean = {} is not positive", rs.b_mean)));
    }
    let (a, b) = (rs.a_mean, rs.b_mean);
    let c = a / b;
    let var = rs.a_se.powi(2) / (b * b) + a * a * rs.b_se.powi(2) / b.powi(4)
        - 2.0 * a * rs.ab_cov / b.powi(3);
    Ok((c, var.max(0.0).sqrt()))
}

/// The quantity a risk curve is indexed by.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Control {
    InflationC,
    RidgeLambda,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskCurve {
    pub control: Control,
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

impl RiskCurve {
    /// CSV with columns `control,mean,se`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["control", "mean", "se"])?;
        for ((g, m), s) in self.grid.iter().zip(&self.mean).zip(&self.se) {
            w.write_record([g.to_string(), m.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Grid point with the smallest mean.
    pub fn argmin(&self) -> Option<(f64, f64)> {
        self.grid
            .iter()
            .zip(&self.mean)
            .filter(|(_, m)| m.is_finite())
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(g, m)| (*g, *m))
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("grid must not be empty"));
    }
    if grid.iter().any(|g| !g.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("grid must be finite and strictly increasing"));
    }
    Ok(())
}

/// `G(c)` reconstructed from the moments on a grid of inflation constants.
pub fn inflation_curve(rs: &RiskSummary, grid: &[f64]) -> Result<RiskCurve> {
    check_grid(grid)?;
    Ok(RiskCurve {
        control: Control::InflationC,
        grid: grid.to_vec(),
        mean: grid.iter().map(|&c| rs.g(c)).collect(),
        se: grid.iter().map(|&c| rs.g_se(c)).collect(),
    })
}

/// `points` uniform values on `[0, 2 max(1, c_theory)]`.
pub fn default_c_grid(c_theory: f64, points: usize) -> Vec<f64> {
    let top = 2.0 * c_theory.max(1.0);
    let m = points.max(2) - 1;
    (0..=m).map(|i| top * i as f64 / m as f64).collect()
}

/// Signed log grid: `per_side` negative points reaching `-neg_extent`,
/// zero, and `per_side` positive points reaching `pos_extent`. The smallest
/// magnitudes are `1e-4` of each extent.
pub fn signed_log_grid(neg_extent: f64, pos_extent: f64, per_side: usize) -> Vec<f64> {
    let side = |extent: f64| -> Vec<f64> {
        if per_side == 0 || !(extent > 0.0) {
            return Vec::new();
        }
        (0..per_side)
            .map(|i| {
                let t = if per_side == 1 { 1.0 } else { i as f64 / (per_side - 1) as f64 };
                extent * 10f64.powf(-4.0 * (1.0 - t))
            })
            .collect()
    };
    let mut grid: Vec<f64> = side(neg_extent).into_iter().rev().map(|v| -v).collect();
    grid.push(0.0);
    grid.extend(side(pos_extent));
    grid
}

/// Per-draw ridge risk on a whole penalty grid, via one eigendecomposition
/// of the Gram matrix.
pub struct RidgePath {
    eigenvalues: DVector<f64>,
    /// `Uᵀ X Σ Xᵀ U`.
    m: DMatrix<f64>,
    /// `Uᵀ X Σ β`.
    g: DVector<f64>,
    /// `Uᵀ Y`.
    uy: DVector<f64>,
    /// `Uᵀ X β`.
    ux_beta: DVector<f64>,
    /// `Uᵀ E[εεᵀ | X] U`.
    noise_cov: DMatrix<f64>,
    signal: f64,
    min_eig: f64,
}

impl RidgePath {
    pub fn new(inputs: &ScenarioInputs, sample: &DesignSample, gf: &GramFactor) -> Self {
        let eig = gf.eigen();
        let u = &eig.eigenvectors;
        let s = &inputs.spectrum;
        let x = sample.x();
        let m = u.tr_mul(&(linalg::weighted_gram(x.as_view(), s.eigenvalues()) * u));
        let sb = DVector::from_iterator(
            s.d(),
            s.eigenvalues().iter().zip(inputs.beta.coeffs()).map(|(l, c)| l * c),
        );
        let g = u.tr_mul(&(x * sb));
        let ux_beta = u.tr_mul(&(x * inputs.beta.as_dvector()));
        let trace = s.trace();
        let variances = DVector::from_iterator(
            sample.n(),
            x.row_iter().map(|r| inputs.noise.conditional_variance(r.norm_squared(), trace)),
        );
        let noise_cov = u.tr_mul(&DMatrix::from_diagonal(&variances)) * u;
        Self {
            eigenvalues: eig.eigenvalues.clone(),
            m,
            g,
            uy: u.tr_mul(sample.y()),
            ux_beta,
            noise_cov,
            signal: inputs.beta.signal(s),
            min_eig: eig.eigenvalues.min(),
        }
    }

    pub fn min_eig(&self) -> f64 {
        self.min_eig
    }

    fn quad(&self, w: &DVector<f64>) -> f64 {
        w.dot(&(&self.m * w))
    }

    fn weights(&self, v: &DVector<f64>, lambda: f64) -> DVector<f64> {
        v.zip_map(&self.eigenvalues, |t, e| t / (e + lambda))
    }

    /// `R(θ_λ)` for the realized labels.
    pub fn realized(&self, lambda: f64) -> f64 {
        let w = self.weights(&self.uy, lambda);
        self.signal - 2.0 * w.dot(&self.g) + self.quad(&w)
    }

    /// `E[R(θ_λ) | X]`, averaging over the noise.
    pub fn conditional(&self, lambda: f64) -> f64 {
        let w = self.weights(&self.ux_beta, lambda);
        let inv = self.eigenvalues.map(|e| 1.0 / (e + lambda));
        let mut noise = 0.0;
        for k in 0..inv.len() {
            for l in 0..inv.len() {
                noise += self.m[(k, l)] * self.noise_cov[(l, k)] * inv[k] * inv[l];
            }
        }
        self.signal - 2.0 * w.dot(&self.g) + self.quad(&w) + noise
    }

    pub fn risk(&self, lambda: f64, conditional: bool) -> f64 {
        if conditional { self.conditional(lambda) } else { self.realized(lambda) }
    }
}

/// Which per-draw risk a ridge curve averages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RidgeRisk {
    /// Averaged over the noise given the design.
    #[default]
    Conditional,
    /// With the realized noise draw.
    Realized,
}

/// Monte Carlo ridge risk curve plus per-replicate diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeCurve {
    pub curve: RiskCurve,
    /// Replicates skipped at each grid point because the penalty was below
    /// that replicate's admissible bound.
    pub skipped: Vec<usize>,
    /// Per-replicate argmin over the admissible grid.
    pub argmins: Vec<f64>,
    pub min_eigs: Vec<f64>,
    pub failures: Vec<ReplicateFailure>,
    pub risk: RidgeRisk,
    pub margin: f64,
}

/// Ridge risk on a penalty grid, averaged over replicates.
pub fn ridge_curve(
    inputs: &ScenarioInputs,
    grid: &[f64],
    plan: &McPlan,
    risk: RidgeRisk,
    margin: f64,
) -> Result<RidgeCurve> {
    check_grid(grid)?;
    if plan.replicates < 2 {
        return Err(invalid("need at least 2 replicates"));
    }
    let conditional = risk == RidgeRisk::Conditional;
    let out = run_replicates(plan, |lin| {
        let sample = inputs.sample(lin)?;
        let gf = gram_factorize(&sample)?;
        let path = RidgePath::new(inputs, &sample, &gf);
        let bound = ridge_lower_bound(&gf, margin);
        let risks: Vec<Option<f64>> = grid
            .iter()
            .map(|&l| (l > bound).then(|| path.risk(l, conditional)))
            .collect();
        Ok((risks, path.min_eig()))
    });
    let mut mean_v = Vec::with_capacity(grid.len());
    let mut se_v = Vec::with_capacity(grid.len());
    let mut skipped = Vec::with_capacity(grid.len());
    for j in 0..grid.len() {
        let vals: Vec<f64> = out.values.iter().filter_map(|(r, _)| r[j]).collect();
        skipped.push(out.values.len() - vals.len());
        let s = crate::stats::MeanSe::of(&vals);
        mean_v.push(s.mean);
        se_v.push(s.se);
    }
    if skipped.iter().all(|&s| s == out.values.len()) {
        return Err(invalid("no grid point is admissible for any replicate"));
    }
    let truncated: usize = skipped.iter().sum();
    if truncated > 0 {
        log::info!("ridge grid truncated by the safety margin at {truncated} replicate-points");
    }
    let argmins = out
        .values
        .iter()
        .map(|(r, _)| {
            grid.iter()
                .zip(r)
                .filter_map(|(g, v)| v.map(|v| (*g, v)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map_or(f64::NAN, |(g, _)| g)
        })
        .collect();
    Ok(RidgeCurve {
        curve: RiskCurve { control: Control::RidgeLambda, grid: grid.to_vec(), mean: mean_v, se: se_v },
        skipped,
        argmins,
        min_eigs: out.values.iter().map(|v| v.1).collect(),
        failures: out.failures,
        risk,
        margin,
    })
}

/// Exact derivative of the noise-averaged ridge risk at `λ = 0` for `Σ = I`:
/// the bias terms cancel and `-2σ² tr((XXᵀ)⁻²)` remains.
pub fn risk_derivative_at_zero(
    sample: &DesignSample,
    gf: &GramFactor,
    s: &Spectrum,
    sigma2: f64,
) -> Result<f64> {
    if !s.is_identity() {
        return Err(invalid("the derivative formula holds only for the identity covariance"));
    }
    if gf.n() != sample.n() {
        return Err(Error::DimensionMismatch { expected: sample.n(), found: gf.n() });
    }
    let inv = gf.inverse();
    Ok(-2.0 * sigma2 * inv.component_mul(&inv).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::make_beta_topk;
    use crate::spectrum::make_block_spectrum;

    fn summary(a: f64, b: f64) -> RiskSummary {
        RiskSummary {
            a_mean: a,
            a_se: 0.01,
            b_mean: b,
            b_se: 0.02,
            ab_cov: 1e-4,
            signal: 1.0,
            replicates: 10,
            failures: vec![],
        }
    }

    #[test]
    fn excess_risk_examples() {
        let s = make_block_spectrum(5, 100, 0.1).unwrap();
        let b = make_beta_topk(&s, 5).unwrap();
        let beta = EstimateVector::new(b.as_dvector(), Provenance::External);
        assert_eq!(excess_risk(&beta, &b, &s).unwrap(), 0.0);
        let zero = EstimateVector::new(DVector::zeros(100), Provenance::External);
        assert!((excess_risk(&zero, &b, &s).unwrap() - 1.0).abs() < 1e-12);
        assert!((excess_risk(&beta.inflate(2.0), &b, &s).unwrap() - 1.0).abs() < 1e-12);
        let short = EstimateVector::external(&[1.0]);
        assert!(excess_risk(&short, &b, &s).is_err());
    }

    #[test]
    fn curve_algebra() {
        let rs = summary(0.3, 0.05);
        let c = inflation_curve(&rs, &[0.0]).unwrap();
        assert_eq!(c.mean, vec![1.0]);
        let (ch, _) = empirical_c_opt(&rs).unwrap();
        assert!((ch - 6.0).abs() < 1e-12);
        assert!(inflation_curve(&rs, &[1.0, 1.0]).is_err());
        assert!(inflation_curve(&rs, &[]).is_err());
        assert!(empirical_c_opt(&summary(0.3, 0.0)).is_err());
    }

    #[test]
    fn scaled_summary_matches_rescaled_grid() {
        let rs = summary(0.3, 0.05);
        let grid = [0.0, 0.5, 1.0, 2.5];
        let base = inflation_curve(&rs, &grid.map(|c| 3.0 * c)).unwrap();
        let scaled = inflation_curve(&rs.scaled(3.0), &grid).unwrap();
        for (a, b) in base.mean.iter().zip(&scaled.mean) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        for (a, b) in base.se.iter().zip(&scaled.se) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn signed_grid_shape() {
        let g = signed_log_grid(2.0, 100.0, 25);
        assert_eq!(g.len(), 51);
        assert_eq!(g[0], -2.0);
        assert_eq!(g[25], 0.0);
        assert!((g[50] - 100.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let c = default_c_grid(4.0, 101);
        assert_eq!(c.len(), 101);
        assert_eq!(c[100], 8.0);
    }

    #[test]
    fn derivative_scalar_case() {
        let s = Spectrum::isotropic(2).unwrap();
        let b = make_beta_topk(&s, 1).unwrap();
        let z = DMatrix::from_row_slice(1, 2, &[2.0, 0.0]);
        let smp = DesignSample::from_parts(&s, z, DVector::zeros(1), &b).unwrap();
        let gf = gram_factorize(&smp).unwrap();
        assert_eq!(risk_derivative_at_zero(&smp, &gf, &s, 1.0).unwrap(), -2.0 / 16.0);
        assert_eq!(risk_derivative_at_zero(&smp, &gf, &s, 0.0).unwrap(), 0.0);
        let block = make_block_spectrum(5, 100, 0.1).unwrap();
        let bb = make_beta_topk(&block, 1).unwrap();
        let smp = sample_design(&block, 5, &NoiseModel::none(), &bb, SeedLineage::new(1, Purpose::Design, 0)).unwrap();
        let gf = gram_factorize(&smp).unwrap();
        assert!(risk_derivative_at_zero(&smp, &gf, &block, 1.0).is_err());
    }

    #[test]
    fn ridge_path_matches_direct_estimates() {
        let s = make_block_spectrum(6, 100, 0.1).unwrap();
        let b = make_beta_topk(&s, 6).unwrap();
        let inputs = ScenarioInputs::new(s.clone(), b.clone(), NoiseModel::homoscedastic(0.7).unwrap(), 6).unwrap();
        let smp = inputs.sample(SeedLineage::new(8, Purpose::Design, 2)).unwrap();
        let gf = gram_factorize(&smp).unwrap();
        let path = RidgePath::new(&inputs, &smp, &gf);
        for lam in [-0.5 * gf.min_eig(), 0.0, 1.0, 50.0] {
            let th = estimators::ridge(&smp, &gf, lam).unwrap();
            let direct = excess_risk(&th, &b, &s).unwrap();
            assert!((path.realized(lam) - direct).abs() <= 1e-9 * direct.max(1.0), "lambda {lam}");
        }
    }
}
