//! Signal vectors, noise models and Gaussian designs in the eigenbasis.

use std::path::Path;

use nalgebra::{DMatrix, DMatrixView, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Error, Result};
use crate::rng::{Purpose, SeedLineage};
use crate::spectrum::Spectrum;

/// Coefficients `cᵢ = βᵀvᵢ` of the true parameter in the eigenbasis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaCoefficients {
    coeffs: Vec<f64>,
    normalized: bool,
}

impl BetaCoefficients {
    /// Raw, unnormalized coefficients.
    pub fn raw(coeffs: Vec<f64>) -> Self {
        Self { coeffs, normalized: false }
    }

    /// Raw standard basis vector `e_i` of length `d`.
    pub fn unit(d: usize, i: usize) -> Self {
        let mut coeffs = vec![0.0; d];
        coeffs[i] = 1.0;
        Self::raw(coeffs)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coeffs)
    }

    pub fn d(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// `βᵀΣβ`.
    pub fn signal(&self, s: &Spectrum) -> f64 {
        self.power_form(s, 1)
    }

    /// `βᵀΣᵖβ`.
    pub fn power_form(&self, s: &Spectrum, p: i32) -> f64 {
        let c2: Vec<f64> = self.coeffs.iter().map(|c| c * c).collect();
        s.weighted_power_sum(&c2, p)
    }
}

/// Equal weight on the top `k` eigendirections, scaled so that `βᵀΣβ = 1`.
pub fn make_beta_topk(s: &Spectrum, k: usize) -> Result<BetaCoefficients> {
    if k == 0 || k > s.d() {
        return Err(invalid(format!("k must lie in [1, {}], got {k}", s.d())));
    }
    let head = crate::stats::pairwise_sum(&s.eigenvalues()[..k]);
    let t = 1.0 / head.sqrt();
    let mut coeffs = vec![0.0; s.d()];
    coeffs[..k].iter_mut().for_each(|c| *c = t);
    Ok(BetaCoefficients { coeffs, normalized: true })
}

/// Caller-supplied coefficients, optionally rescaled so that `βᵀΣβ = 1`.
pub fn make_beta_custom(s: &Spectrum, raw: &[f64], normalize: bool) -> Result<BetaCoefficients> {
    if raw.len() != s.d() {
        return Err(Error::DimensionMismatch { expected: s.d(), found: raw.len() });
    }
    if raw.iter().any(|c| !c.is_finite()) {
        return Err(invalid("coefficients must be finite"));
    }
    let mut beta = BetaCoefficients::raw(raw.to_vec());
    if normalize {
        let signal = beta.signal(s);
        if signal <= 0.0 {
            return Err(invalid("cannot normalize an all-zero coefficient vector"));
        }
        let t = signal.sqrt().recip();
        beta.coeffs.iter_mut().for_each(|c| *c *= t);
        beta.normalized = true;
    }
    Ok(beta)
}

/// Noise distribution, conditional on the covariate row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    /// `ε ~ N(0, σ²)` independent of `x`.
    Homoscedastic { sigma: f64 },
    /// `ε | x ~ N(0, v(x))` with `v(x) = min(σ₀² ‖x‖² / tr(Σ), σ_max²)`.
    Heteroscedastic { sigma0: f64, sigma_max: f64 },
    /// `ε = ±σ` with equal probability.
    ScaledRademacher { sigma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    kind: NoiseKind,
    /// Uniform bound on `E[ε² | x]`.
    sigma_max2: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind) -> Result<Self> {
        let check = |v: f64, name: &str| {
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(invalid(format!("{name} must be finite and non-negative, got {v}")))
            }
        };
        let sigma_max2 = match kind {
            NoiseKind::None => 0.0,
            NoiseKind::Homoscedastic { sigma } | NoiseKind::ScaledRademacher { sigma } => {
                check(sigma, "sigma")?.powi(2)
            }
            NoiseKind::Heteroscedastic { sigma0, sigma_max } => {
                check(sigma0, "sigma0")?;
                check(sigma_max, "sigma_max")?.powi(2)
            }
        };
        Ok(Self { kind, sigma_max2 })
    }

    pub fn none() -> Self {
        Self { kind: NoiseKind::None, sigma_max2: 0.0 }
    }

    pub fn homoscedastic(sigma: f64) -> Result<Self> {
        Self::new(NoiseKind::Homoscedastic { sigma })
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn sigma_max2(&self) -> f64 {
        self.sigma_max2
    }

    /// Whether `ε` is independent of `x` with a constant variance.
    pub fn is_homoscedastic(&self) -> bool {
        !matches!(self.kind, NoiseKind::Heteroscedastic { .. })
    }

    /// `E[ε² | x]` given `‖x‖²` and `tr(Σ)`.
    pub fn conditional_variance(&self, x_norm_sq: f64, trace: f64) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::Homoscedastic { sigma } | NoiseKind::ScaledRademacher { sigma } => {
                sigma * sigma
            }
            NoiseKind::Heteroscedastic { sigma0, .. } => {
                (sigma0 * sigma0 * x_norm_sq / trace).min(self.sigma_max2)
            }
        }
    }

    /// Unconditional `E[ε²]`.
    ///
    /// For the heteroscedastic rule, `‖x‖²/tr(Σ)` is a weighted chi-square.
    /// It is exact for `Σ ∝ I` and otherwise replaced by a moment-matched
    /// `χ²_ν/ν` with `ν = 1/r(n)`.
    pub fn second_moment(&self, s: &Spectrum) -> f64 {
        match self.kind {
            NoiseKind::Heteroscedastic { sigma0, .. } => {
                let a = sigma0 * sigma0;
                let b = self.sigma_max2;
                if a == 0.0 || b == 0.0 {
                    return 0.0;
                }
                let f = crate::spectrum::functionals(s, 1);
                let nu = f.eff_rank_sq;
                let t = b / a;
                let chi_nu = ChiSquared::new(nu).expect("nu is positive");
                let chi_nu2 = ChiSquared::new(nu + 2.0).expect("nu is positive");
                a * chi_nu2.cdf(nu * t) + b * (1.0 - chi_nu.cdf(nu * t))
            }
            _ => self.conditional_variance(0.0, 1.0),
        }
    }

    fn draw(&self, rng: &mut impl Rng, x_norm_sq: f64, trace: f64) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::ScaledRademacher { sigma } => {
                if rng.random::<bool>() { sigma } else { -sigma }
            }
            _ => {
                let sd = self.conditional_variance(x_norm_sq, trace).sqrt();
                sd * rng.sample::<f64, _>(StandardNormal)
            }
        }
    }
}

/// Signal-to-noise ratio `βᵀΣβ / E[ε²]`. Infinite for noiseless models.
pub fn snr(beta: &BetaCoefficients, s: &Spectrum, noise: &NoiseModel) -> f64 {
    let e2 = noise.second_moment(s);
    if e2 == 0.0 { f64::INFINITY } else { beta.signal(s) / e2 }
}

/// One replicate: standard normal `z`, design `x = z diag(√λ)`, noise and labels.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignSample {
    z: DMatrix<f64>,
    x: DMatrix<f64>,
    eps: DVector<f64>,
    y: DVector<f64>,
    replicate_id: u64,
    lineage: Option<SeedLineage>,
}

impl DesignSample {
    /// Assemble a sample from explicit standard normal coordinates and noise.
    pub fn from_parts(
        s: &Spectrum,
        z: DMatrix<f64>,
        eps: DVector<f64>,
        beta: &BetaCoefficients,
    ) -> Result<Self> {
        if z.ncols() != s.d() {
            return Err(Error::DimensionMismatch { expected: s.d(), found: z.ncols() });
        }
        if beta.d() != s.d() {
            return Err(Error::DimensionMismatch { expected: s.d(), found: beta.d() });
        }
        if eps.len() != z.nrows() {
            return Err(Error::DimensionMismatch { expected: z.nrows(), found: eps.len() });
        }
        let x = scale_columns(&z, s);
        let y = &x * beta.as_dvector() + &eps;
        Ok(Self { z, x, eps, y, replicate_id: 0, lineage: None })
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn eps(&self) -> &DVector<f64> {
        &self.eps
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn replicate_id(&self) -> u64 {
        self.replicate_id
    }

    pub fn lineage(&self) -> Option<SeedLineage> {
        self.lineage
    }

    /// Rows `start..start+len` of `x`, without copying.
    pub fn x_rows(&self, start: usize, len: usize) -> DMatrixView<'_, f64> {
        self.x.rows(start, len)
    }

    /// Dump as CSV: columns `x1..xd`, then `eps`, then `y`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.d()).map(|j| format!("x{j}")).collect();
        header.push("eps".into());
        header.push("y".into());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| format!("{v:e}")).collect();
            rec.push(format!("{:e}", self.eps[i]));
            rec.push(format!("{:e}", self.y[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn scale_columns(z: &DMatrix<f64>, s: &Spectrum) -> DMatrix<f64> {
    let mut x = z.clone();
    for (mut col, l) in x.column_iter_mut().zip(s.eigenvalues()) {
        col *= l.sqrt();
    }
    x
}

/// Draw one replicate. `lineage` selects the stream; the noise uses the same
/// lineage under the noise purpose so designs do not depend on the noise model.
pub fn sample_design(
    s: &Spectrum,
    n: usize,
    noise: &NoiseModel,
    beta: &BetaCoefficients,
    lineage: SeedLineage,
) -> Result<DesignSample> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if beta.d() != s.d() {
        return Err(Error::DimensionMismatch { expected: s.d(), found: beta.d() });
    }
    let d = s.d();
    let mut rng = lineage.with_purpose(Purpose::Design).rng();
    let data: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    let z = DMatrix::from_vec(n, d, data);
    let x = scale_columns(&z, s);

    let trace = s.trace();
    let row_norms: Vec<f64> = if noise.is_homoscedastic() {
        vec![0.0; n]
    } else {
        let mut norms = vec![0.0; n];
        for col in x.column_iter() {
            for (acc, v) in norms.iter_mut().zip(col.iter()) {
                *acc += v * v;
            }
        }
        norms
    };
    let mut nrng = lineage.with_purpose(Purpose::Noise).rng();
    let eps = DVector::from_iterator(n, row_norms.iter().map(|&r| noise.draw(&mut nrng, r, trace)));
    let y = &x * beta.as_dvector() + &eps;
    Ok(DesignSample { z, x, eps, y, replicate_id: lineage.replicate, lineage: Some(lineage) })
}
