//! Minimum-norm, ridge, data-splitting and derived estimators.
//!
//! Every solve goes through the `n x n` Gram matrix `A = XXᵀ`; nothing of
//! size `d x d` is ever formed.

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DMatrixView, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::sampling::DesignSample;
use crate::spectrum::Spectrum;

/// Default safety margin for negative ridge penalties, as a fraction of the
/// smallest Gram eigenvalue.
pub const DEFAULT_RIDGE_MARGIN: f64 = 0.05;

/// How an estimate was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    MinNorm,
    Ridge { lambda: f64 },
    DataSplit { splits: usize },
    Inflated { c: f64, base: Box<Provenance> },
    ShrinkToward { c: f64 },
    UnbiasedAttempt,
    /// Supplied directly by the caller.
    External,
}

/// Coefficients in the eigenbasis together with their provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateVector {
    coeffs: DVector<f64>,
    provenance: Provenance,
}

impl EstimateVector {
    pub fn new(coeffs: DVector<f64>, provenance: Provenance) -> Self {
        Self { coeffs, provenance }
    }

    pub fn external(coeffs: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(coeffs), Provenance::External)
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn as_slice(&self) -> &[f64] {
        self.coeffs.as_slice()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn d(&self) -> usize {
        self.coeffs.len()
    }

    /// Scale every coordinate by `c`.
    pub fn inflate(&self, c: f64) -> Self {
        Self {
            coeffs: &self.coeffs * c,
            provenance: Provenance::Inflated { c, base: Box::new(self.provenance.clone()) },
        }
    }
}

/// Free-function form of [`EstimateVector::inflate`].
pub fn inflate(theta: &EstimateVector, c: f64) -> EstimateVector {
    theta.inflate(c)
}

#[derive(Clone, Debug)]
enum Solver {
    Cholesky(Cholesky<f64, Dyn>),
    /// Eigendecomposition with eigenvalues below the jitter threshold
    /// treated as zero.
    Eigen { vectors: DMatrix<f64>, inv_values: DVector<f64> },
}

/// Factorization of the Gram matrix `XXᵀ`.
#[derive(Clone, Debug)]
pub struct GramFactor {
    gram: DMatrix<f64>,
    solver: Solver,
    eigen: OnceLock<SymmetricEigen<f64, Dyn>>,
}

impl GramFactor {
    pub fn from_gram(gram: DMatrix<f64>) -> Result<Self> {
        let n = gram.nrows();
        if n == 0 || gram.ncols() != n {
            return Err(invalid("Gram matrix must be square and non-empty"));
        }
        if let Some(ch) = Cholesky::new(gram.clone()) {
            return Ok(Self { gram, solver: Solver::Cholesky(ch), eigen: OnceLock::new() });
        }
        let jitter = 1e-12 * gram.trace() / n as f64;
        let eig = gram.clone().symmetric_eigen();
        let dropped = eig.eigenvalues.iter().filter(|v| **v <= jitter).count();
        log::warn!(
            "Gram matrix is not numerically positive definite; using an eigendecomposition \
             with threshold {jitter:e} ({dropped} of {n} directions dropped)"
        );
        let inv_values = eig.eigenvalues.map(|v| if v > jitter { v.recip() } else { 0.0 });
        let solver = Solver::Eigen { vectors: eig.eigenvectors.clone(), inv_values };
        let eigen = OnceLock::new();
        let _ = eigen.set(eig);
        Ok(Self { gram, solver, eigen })
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn n(&self) -> usize {
        self.gram.nrows()
    }

    /// Whether the Cholesky factorization failed and the eigen path is in use.
    pub fn used_fallback(&self) -> bool {
        matches!(self.solver, Solver::Eigen { .. })
    }

    /// Symmetric eigendecomposition of the Gram matrix, computed on first use.
    pub fn eigen(&self) -> &SymmetricEigen<f64, Dyn> {
        self.eigen.get_or_init(|| self.gram.clone().symmetric_eigen())
    }

    /// Smallest eigenvalue of `XXᵀ`.
    pub fn min_eig(&self) -> f64 {
        self.eigen().eigenvalues.min()
    }

    /// `(XXᵀ)⁻¹ b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match &self.solver {
            Solver::Cholesky(ch) => ch.solve(b),
            Solver::Eigen { vectors, inv_values } => {
                let t = vectors.tr_mul(b).component_mul(inv_values);
                vectors * t
            }
        }
    }

    /// `(XXᵀ)⁻¹ B` for a matrix of right-hand sides.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.solver {
            Solver::Cholesky(ch) => ch.solve(b),
            Solver::Eigen { vectors, inv_values } => {
                let mut t = vectors.tr_mul(b);
                for (mut row, s) in t.row_iter_mut().zip(inv_values.iter()) {
                    row *= *s;
                }
                vectors * t
            }
        }
    }

    /// `(XXᵀ)⁻¹`.
    pub fn inverse(&self) -> DMatrix<f64> {
        let mut inv = match &self.solver {
            Solver::Cholesky(ch) => ch.inverse(),
            Solver::Eigen { .. } => self.solve_matrix(&DMatrix::identity(self.n(), self.n())),
        };
        linalg::symmetrize_upper(&mut inv);
        inv
    }
}

/// Factor `XXᵀ` for a sample. Requires `1 ≤ n ≤ d`.
pub fn gram_factorize(sample: &DesignSample) -> Result<GramFactor> {
    gram_factorize_view(sample.x().as_view())
}

/// Factor `XXᵀ` for any row block of a design.
pub fn gram_factorize_view(x: DMatrixView<'_, f64>) -> Result<GramFactor> {
    let (n, d) = x.shape();
    if n == 0 {
        return Err(invalid("need at least one sample"));
    }
    if n > d {
        return Err(invalid(format!("need n <= d for interpolation, got n={n}, d={d}")));
    }
    GramFactor::from_gram(linalg::gram(x))
}

fn check_factor(x_rows: usize, gf: &GramFactor) -> Result<()> {
    if gf.n() != x_rows {
        return Err(Error::DimensionMismatch { expected: x_rows, found: gf.n() });
    }
    Ok(())
}

/// `θ = Xᵀ (XXᵀ)⁻¹ Y`, the minimum-norm interpolator.
pub fn min_norm(sample: &DesignSample, gf: &GramFactor) -> Result<EstimateVector> {
    min_norm_for(sample.x().as_view(), sample.y(), gf)
}

/// Minimum-norm interpolator for an arbitrary design and label vector.
pub fn min_norm_for(
    x: DMatrixView<'_, f64>,
    y: &DVector<f64>,
    gf: &GramFactor,
) -> Result<EstimateVector> {
    check_factor(x.nrows(), gf)?;
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), found: y.len() });
    }
    let s = gf.solve(y);
    Ok(EstimateVector::new(x.tr_mul(&s), Provenance::MinNorm))
}

/// Projection onto the row space of `X`: `Xᵀ (XXᵀ)⁻¹ X w`.
pub fn project_rowspace(x: &DMatrix<f64>, gf: &GramFactor, w: &DVector<f64>) -> DVector<f64> {
    x.tr_mul(&gf.solve(&(x * w)))
}

/// Ridge estimator with the default negative-penalty margin.
pub fn ridge(sample: &DesignSample, gf: &GramFactor, lambda: f64) -> Result<EstimateVector> {
    ridge_with_margin(sample, gf, lambda, DEFAULT_RIDGE_MARGIN)
}

/// Smallest admissible penalty is strictly above `-(1 - margin) · min_eig`.
pub fn ridge_lower_bound(gf: &GramFactor, margin: f64) -> f64 {
    -(1.0 - margin) * gf.min_eig()
}

/// `θ_λ = Xᵀ (XXᵀ + λI)⁻¹ Y`. Negative penalties are allowed down to the
/// margin-adjusted bound.
pub fn ridge_with_margin(
    sample: &DesignSample,
    gf: &GramFactor,
    lambda: f64,
    margin: f64,
) -> Result<EstimateVector> {
    check_factor(sample.n(), gf)?;
    if !lambda.is_finite() {
        return Err(invalid(format!("ridge penalty must be finite, got {lambda}")));
    }
    if !(0.0..1.0).contains(&margin) {
        return Err(invalid(format!("ridge margin must lie in [0, 1), got {margin}")));
    }
    let y = sample.y();
    let s = if lambda == 0.0 {
        gf.solve(y)
    } else if lambda > 0.0 {
        let mut shifted = gf.gram().clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += lambda;
        }
        match Cholesky::new(shifted) {
            Some(ch) => ch.solve(y),
            None => eigen_shift_solve(gf, lambda, y),
        }
    } else {
        let bound = ridge_lower_bound(gf, margin);
        if lambda <= bound {
            return Err(Error::RidgeBelowBound { lambda, bound, min_eig: gf.min_eig() });
        }
        eigen_shift_solve(gf, lambda, y)
    };
    Ok(EstimateVector::new(sample.x().tr_mul(&s), Provenance::Ridge { lambda }))
}

fn eigen_shift_solve(gf: &GramFactor, lambda: f64, b: &DVector<f64>) -> DVector<f64> {
    let eig = gf.eigen();
    let t = eig.eigenvectors.tr_mul(b);
    let t = DVector::from_iterator(
        t.len(),
        t.iter().zip(eig.eigenvalues.iter()).map(|(t, v)| t / (v + lambda)),
    );
    &eig.eigenvectors * t
}

/// Held-out block used to estimate the inflation constant.
#[derive(Clone, Debug, PartialEq)]
pub struct Holdout {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

/// Output of the data-splitting procedure.
#[derive(Clone, Debug)]
pub struct DataSplit {
    /// Sum of the minimum-norm interpolators of blocks `1..N-1`.
    pub theta: EstimateVector,
    /// The last block, never used to build `theta`.
    pub holdout: Holdout,
    pub block_sizes: Vec<usize>,
    /// Number of blocks whose Gram factorization needed the fallback path.
    pub fallbacks: usize,
}

/// Block sizes for `n` rows and `splits` blocks: `⌊n/N⌋` for the first
/// `N - 1`, the remainder for the last.
pub fn split_sizes(n: usize, splits: usize) -> Result<Vec<usize>> {
    if splits < 2 {
        return Err(invalid(format!("need at least 2 splits, got {splits}")));
    }
    let b = n / splits;
    if b == 0 {
        return Err(invalid(format!("{splits} splits of {n} rows leave empty blocks")));
    }
    let mut sizes = vec![b; splits - 1];
    sizes.push(n - (splits - 1) * b);
    Ok(sizes)
}

/// Default number of splits, `⌈√n⌉`.
pub fn default_splits(n: usize) -> usize {
    ((n as f64).sqrt().ceil() as usize).max(2)
}

/// Split the sample into `splits` consecutive row blocks and sum the
/// minimum-norm interpolators of all but the last block.
pub fn data_split(sample: &DesignSample, splits: usize) -> Result<DataSplit> {
    let sizes = split_sizes(sample.n(), splits)?;
    let d = sample.d();
    if let Some(&big) = sizes[..splits - 1].iter().find(|&&s| s >= d) {
        return Err(invalid(format!("block size {big} must be below d = {d}")));
    }
    let y = sample.y();
    let mut fallbacks = 0;
    let used: usize = sizes[..splits - 1].iter().sum();
    let mut stacked = DVector::zeros(used);
    let mut start = 0;
    for &b in &sizes[..splits - 1] {
        let xb = sample.x_rows(start, b);
        let gf = GramFactor::from_gram(linalg::gram(xb))?;
        fallbacks += usize::from(gf.used_fallback());
        let sol = gf.solve(&y.rows(start, b).into_owned());
        stacked.rows_mut(start, b).copy_from(&sol);
        start += b;
    }
    let theta = sample.x_rows(0, used).tr_mul(&stacked);
    let last = sizes[splits - 1];
    let holdout = Holdout {
        x: sample.x_rows(used, last).into_owned(),
        y: y.rows(used, last).into_owned(),
    };
    Ok(DataSplit {
        theta: EstimateVector::new(theta, Provenance::DataSplit { splits }),
        holdout,
        block_sizes: sizes,
        fallbacks,
    })
}

/// Plug-in inflation constant `ĉ* = q̂ / r̂` with `q̂ = mean(θᵀxᵢ ηᵢ)` and
/// `r̂ = mean((θᵀxᵢ)²)` over the holdout.
pub fn estimate_c_star(theta_ds: &EstimateVector, holdout: &Holdout) -> Result<f64> {
    let k = holdout.x.nrows();
    if k == 0 || holdout.y.len() != k {
        return Err(invalid("holdout must be non-empty with one label per row"));
    }
    if holdout.x.ncols() != theta_ds.d() {
        return Err(Error::DimensionMismatch { expected: holdout.x.ncols(), found: theta_ds.d() });
    }
    let p = &holdout.x * theta_ds.coeffs();
    let q_hat = p.dot(&holdout.y) / k as f64;
    let r_hat = p.norm_squared() / k as f64;
    if r_hat == 0.0 {
        return Err(Error::Degenerate("holdout predictions are all zero".into()));
    }
    Ok(q_hat / r_hat)
}

/// Diagonal surrogate of `E[Π_X]⁻¹ θ`: coordinate `i` scaled by `(tr(Σ)/n)/λᵢ`.
pub fn unbiased_attempt(theta: &EstimateVector, s: &Spectrum, n: usize) -> Result<EstimateVector> {
    if theta.d() != s.d() {
        return Err(Error::DimensionMismatch { expected: s.d(), found: theta.d() });
    }
    let base = s.trace() / n as f64;
    let coeffs = DVector::from_iterator(
        theta.d(),
        theta.coeffs().iter().zip(s.eigenvalues()).map(|(t, l)| base / l * t),
    );
    Ok(EstimateVector::new(coeffs, Provenance::UnbiasedAttempt))
}

/// `(1 - c) θ + c v` for a unit vector `v`.
pub fn shrink_toward(theta: &EstimateVector, v: &DVector<f64>, c: f64) -> Result<EstimateVector> {
    if v.len() != theta.d() {
        return Err(Error::DimensionMismatch { expected: theta.d(), found: v.len() });
    }
    let norm = v.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(invalid(format!("shrink direction must have unit norm, got {norm}")));
    }
    let coeffs = theta.coeffs() * (1.0 - c) + v * c;
    Ok(EstimateVector::new(coeffs, Provenance::ShrinkToward { c }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, SeedLineage};
    use crate::sampling::{make_beta_custom, make_beta_topk, sample_design, NoiseModel};
    use crate::spectrum::make_block_spectrum;

    fn noisy_sample(n: usize, d: usize, seed: u64) -> (Spectrum, DesignSample) {
        let s = Spectrum::isotropic(d).unwrap();
        let b = make_beta_topk(&s, d.min(3)).unwrap();
        let noise = NoiseModel::homoscedastic(0.5).unwrap();
        let smp = sample_design(&s, n, &noise, &b, SeedLineage::new(seed, Purpose::Design, 0)).unwrap();
        (s, smp)
    }

    #[test]
    fn scalar_case() {
        let s = Spectrum::isotropic(2).unwrap();
        let beta = make_beta_custom(&s, &[3.0, 0.0], false).unwrap();
        let z = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let smp = DesignSample::from_parts(&s, z, DVector::zeros(1), &beta).unwrap();
        let gf = gram_factorize(&smp).unwrap();
        assert_eq!(gf.gram()[(0, 0)], 1.0);
        let th = min_norm(&smp, &gf).unwrap();
        assert_eq!(th.as_slice(), &[3.0, 0.0]);
    }

    #[test]
    fn square_full_rank_recovers_beta() {
        let s = Spectrum::from_eigenvalues(vec![3.0, 1.0, 1.0, 0.5, 0.25, 0.25], true).unwrap();
        let b = make_beta_topk(&s, 4).unwrap();
        let smp = sample_design(&s, 6, &NoiseModel::none(), &b, SeedLineage::new(3, Purpose::Design, 0)).unwrap();
        let gf = gram_factorize(&smp).unwrap();
        let th = min_norm(&smp, &gf).unwrap();
        assert!((th.coeffs() - b.as_dvector()).norm() < 1e-8);
    }

    #[test]
    fn inflate_examples() {
        let th = EstimateVector::external(&[1.0, -1.0]);
        assert_eq!(th.inflate(1.0).as_slice(), &[1.0, -1.0]);
        assert_eq!(th.inflate(0.0).as_slice(), &[0.0, 0.0]);
        let two = inflate(&th, 2.0);
        assert_eq!(two.as_slice(), &[2.0, -2.0]);
        assert!(matches!(two.provenance(), Provenance::Inflated { c, .. } if *c == 2.0));
    }

    #[test]
    fn ridge_limits() {
        let (_, smp) = noisy_sample(8, 30, 5);
        let gf = gram_factorize(&smp).unwrap();
        let mn = min_norm(&smp, &gf).unwrap();
        let r0 = ridge(&smp, &gf, 0.0).unwrap();
        assert!((r0.coeffs() - mn.coeffs()).norm() <= 1e-8 * mn.coeffs().norm());
        let huge = ridge(&smp, &gf, 1e12 * gf.gram().trace()).unwrap();
        assert!(huge.coeffs().norm() <= 1e-6);
        let lam = 0.3 * gf.gram().trace() / 8.0;
        let r = ridge(&smp, &gf, lam).unwrap();
        let mut shifted = gf.gram().clone();
        for i in 0..8 {
            shifted[(i, i)] += lam;
        }
        let want = gf.gram() * shifted.lu().solve(smp.y()).unwrap();
        assert!((smp.x() * r.coeffs() - &want).norm() <= 1e-8 * want.norm().max(1.0));
    }

    #[test]
    fn negative_ridge_bound() {
        let (_, smp) = noisy_sample(6, 20, 9);
        let gf = gram_factorize(&smp).unwrap();
        let m = gf.min_eig();
        assert!(ridge(&smp, &gf, -0.5 * m).is_ok());
        match ridge(&smp, &gf, -0.95 * m) {
            Err(Error::RidgeBelowBound { min_eig, .. }) => assert_eq!(min_eig, m),
            other => panic!("expected rejection, got {other:?}"),
        }
        assert!(ridge(&smp, &gf, -1.2 * m).is_err());
    }

    #[test]
    fn duplicate_rows_engage_fallback() {
        let s = Spectrum::isotropic(10).unwrap();
        let b = make_beta_topk(&s, 2).unwrap();
        let mut z = DMatrix::from_fn(4, 10, |i, j| ((i * 10 + j) as f64 * 0.731).sin());
        let row = z.row(0).into_owned();
        z.set_row(3, &row);
        let smp = DesignSample::from_parts(&s, z, DVector::zeros(4), &b).unwrap();
        let gf = gram_factorize(&smp).unwrap();
        assert!(gf.used_fallback());
        let th = min_norm(&smp, &gf).unwrap();
        assert!((smp.x() * th.coeffs() - smp.y()).norm() < 1e-8);
    }

    #[test]
    fn split_arithmetic() {
        assert_eq!(split_sizes(9, 3).unwrap(), vec![3, 3, 3]);
        assert_eq!(split_sizes(10, 3).unwrap(), vec![3, 3, 4]);
        assert!(split_sizes(2, 3).is_err());
        assert!(split_sizes(10, 1).is_err());
        assert_eq!(default_splits(400), 20);
    }

    #[test]
    fn data_split_sums_blocks() {
        let (_, smp) = noisy_sample(9, 40, 11);
        let ds = data_split(&smp, 3).unwrap();
        let mut want = DVector::zeros(40);
        for start in [0, 3] {
            let xb = smp.x_rows(start, 3).into_owned();
            let yb = smp.y().rows(start, 3).into_owned();
            let gf = gram_factorize_view(xb.as_view()).unwrap();
            want += min_norm_for(xb.as_view(), &yb, &gf).unwrap().coeffs();
        }
        assert!((ds.theta.coeffs() - want).norm() < 1e-10);
        assert_eq!(ds.holdout.x, smp.x_rows(6, 3).into_owned());
        assert_eq!(ds.block_sizes, vec![3, 3, 3]);
    }

    #[test]
    fn data_split_duplicated_halves() {
        let s = Spectrum::isotropic(12).unwrap();
        let b = make_beta_topk(&s, 12).unwrap();
        let half = DMatrix::from_fn(3, 12, |i, j| ((i * 12 + j) as f64 * 1.37).cos());
        let z = DMatrix::from_fn(6, 12, |i, j| half[(i % 3, j)]);
        let smp = DesignSample::from_parts(&s, z, DVector::zeros(6), &b).unwrap();
        let ds = data_split(&smp, 2).unwrap();
        let xh = smp.x_rows(0, 3).into_owned();
        let gf = gram_factorize_view(xh.as_view()).unwrap();
        let one = min_norm_for(xh.as_view(), &smp.y().rows(0, 3).into_owned(), &gf).unwrap();
        assert!((ds.theta.coeffs() - one.coeffs()).norm() < 1e-12);
    }

    #[test]
    fn data_split_rejects_wide_blocks() {
        let (_, smp) = noisy_sample(9, 5, 1);
        assert!(data_split(&smp, 2).is_ok());
        let (_, smp) = noisy_sample(9, 4, 1);
        assert!(data_split(&smp, 2).is_err());
    }

    #[test]
    fn c_star_scaling() {
        let s = Spectrum::isotropic(5).unwrap();
        let b = make_beta_topk(&s, 5).unwrap();
        let smp = sample_design(&s, 30, &NoiseModel::none(), &b, SeedLineage::new(4, Purpose::Design, 0)).unwrap();
        let holdout = Holdout { x: smp.x().clone(), y: smp.y().clone() };
        let beta = EstimateVector::new(b.as_dvector(), Provenance::External);
        assert!((estimate_c_star(&beta, &holdout).unwrap() - 1.0).abs() < 1e-12);
        assert!((estimate_c_star(&beta.inflate(2.0), &holdout).unwrap() - 0.5).abs() < 1e-12);
        let zero = EstimateVector::new(DVector::zeros(5), Provenance::External);
        assert!(matches!(estimate_c_star(&zero, &holdout), Err(Error::Degenerate(_))));
    }

    #[test]
    fn unbiased_scales() {
        let iso = Spectrum::isotropic(100).unwrap();
        let th = EstimateVector::new(DVector::from_element(100, 1.0), Provenance::MinNorm);
        let u = unbiased_attempt(&th, &iso, 10).unwrap();
        assert!(u.as_slice().iter().all(|v| (v - 10.0).abs() < 1e-12));

        let block = make_block_spectrum(10, 1000, 0.1).unwrap();
        let th = EstimateVector::new(DVector::from_element(1000, 1.0), Provenance::MinNorm);
        let u = unbiased_attempt(&th, &block, 10).unwrap();
        assert!((u.as_slice()[0] - 10.0).abs() < 1e-10);
    }

    #[test]
    fn shrink_endpoints() {
        let th = EstimateVector::external(&[2.0, 4.0]);
        let v = DVector::from_column_slice(&[0.0, 1.0]);
        assert_eq!(shrink_toward(&th, &v, 0.0).unwrap().as_slice(), &[2.0, 4.0]);
        assert_eq!(shrink_toward(&th, &v, 1.0).unwrap().as_slice(), &[0.0, 1.0]);
        assert_eq!(shrink_toward(&th, &v, 0.5).unwrap().as_slice(), &[1.0, 2.5]);
        assert!(shrink_toward(&th, &(v * 2.0), 0.5).is_err());
    }
}
