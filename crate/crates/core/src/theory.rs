//! Closed-form predictions and two-sided bounds used as analytic oracles.
//!
//! Bounds on random-projection expectations contain `o(1)` and `Θ(1)`
//! factors. Each is replaced by an explicit constant from [`SlackPolicy`],
//! and the policy travels with every [`BoundInterval`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::gram_factorize;
use crate::linalg::{symmetric_part, weighted_gram};
use crate::risk::{run_replicates, McPlan};
use crate::sampling::{BetaCoefficients, NoiseModel};
use crate::spectrum::{functionals, Functionals, Spectrum};
use crate::stats::{covariance, mean};

/// Constants substituted for asymptotic factors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlackPolicy {
    /// Magnitude of every `o(1)` term, applied as `1 ± o1`.
    pub o1: f64,
    /// Constant used for `Θ(1)` inside lower-bound factors like `1 - Θ(1)ρ`.
    pub theta_lower: f64,
}

impl Default for SlackPolicy {
    fn default() -> Self {
        Self { o1: 0.2, theta_lower: 4.0 }
    }
}

/// Analytic lower and upper bound for a scalar expectation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInterval {
    pub lower: f64,
    pub upper: f64,
    pub source: String,
    pub slack_policy: SlackPolicy,
}

impl BoundInterval {
    fn new(lower: f64, upper: f64, source: &str, slack: SlackPolicy) -> Result<Self> {
        if !(lower <= upper) {
            return Err(Error::Degenerate(format!(
                "{source}: lower bound {lower} exceeds upper bound {upper}"
            )));
        }
        Ok(Self { lower, upper, source: source.to_string(), slack_policy: slack })
    }

    /// Whether `value` lies in `[lower - widen, upper + widen]`.
    pub fn contains(&self, value: f64, widen: f64) -> bool {
        value >= self.lower - widen && value <= self.upper + widen
    }
}

struct Setup {
    f: Functionals,
    n: f64,
    l: f64,
}

fn setup(s: &Spectrum, n: usize, top_fraction: f64, what: &str) -> Result<Setup> {
    let f = functionals(s, n);
    let (nf, df) = (n as f64, s.d() as f64);
    if n < 2 || s.d() <= n {
        return Err(Error::Precondition(format!("{what}: needs 2 <= n < d")));
    }
    if f.lambda_max > top_fraction * df / nf {
        return Err(Error::Precondition(format!(
            "{what}: lambda_max = {} exceeds {top_fraction} d/n = {}",
            f.lambda_max,
            top_fraction * df / nf
        )));
    }
    if f.trace <= nf + 1.0 {
        return Err(Error::Precondition(format!("{what}: trace {} must exceed n + 1", f.trace)));
    }
    Ok(Setup { f, n: nf, l: f.trace })
}

/// Bounds on `E[tr((XXᵀ)⁻ᵏ)]` for `k ∈ {1, 2}`.
pub fn trace_inverse_bounds(s: &Spectrum, n: usize, k: u32, slack: &SlackPolicy) -> Result<BoundInterval> {
    if !(k == 1 || k == 2) {
        return Err(invalid(format!("trace bounds are available for k = 1, 2 only, got {k}")));
    }
    let st = setup(s, n, 1.0 / f64::from(k + 1), "trace-inverse bound")?;
    let (nf, l, r, rho) = (st.n, st.l, st.f.r_n, st.f.rho);
    if k == 1 {
        let lower = nf / l + nf * nf * r * (1.0 - slack.theta_lower * rho) / l;
        let upper = nf / l + nf * nf * r / (l * (1.0 - 2.0 * rho).powi(2));
        BoundInterval::new(lower, upper, "E tr(A^-1), A = XX^T", *slack)
    } else {
        let l2 = l * l;
        let lower = nf / l2 * (1.0 - slack.o1) + 2.0 * nf * nf * r / l2;
        let upper = nf / l2 * (1.0 + slack.o1) + 2.0 * nf * nf * r / (l2 * (1.0 - 3.0 * rho).powi(3));
        BoundInterval::new(lower, upper, "E tr(A^-2), A = XX^T", *slack)
    }
}

/// Bounds on the diagonal entry `E[eᵢᵀ Π_X eᵢ] = λᵢ E[aᵢᵀ A⁻¹ aᵢ]`.
pub fn projection_diag_bounds(s: &Spectrum, n: usize, i: usize, slack: &SlackPolicy) -> Result<BoundInterval> {
    if i >= s.d() {
        return Err(invalid(format!("index {i} out of range for d = {}", s.d())));
    }
    let st = setup(s, n, 0.25, "projection bound")?;
    let (nf, l, r, rho) = (st.n, st.l, st.f.r_n, st.f.rho);
    let lam = s.eigenvalues()[i];
    let lower = (1.0 - slack.o1) * nf / l * lam + nf * nf * r / l * lam
        - nf * nf / (l * l) * lam * lam
        - 2.0 * nf.powi(3) * r / (l * l) * lam * lam;
    let shrink = (1.0 - slack.theta_lower * rho).max(0.0).powi(2);
    let upper = (1.0 + slack.o1) * nf / l * lam + nf * nf * r / (l * (1.0 - 2.0 * rho).powi(2)) * lam
        - nf * nf * (1.0 + nf * r) * shrink / (l * l * (1.0 + rho)) * lam * lam;
    BoundInterval::new(lower, upper, "E[Pi_X]_ii", *slack)
}

/// Bounds on `E[εᵀ (XXᵀ)⁻¹ X Σ Xᵀ (XXᵀ)⁻¹ ε]` for noise with variance `σ²`
/// independent of `X`.
pub fn noise_term_bounds(s: &Spectrum, n: usize, sigma2: f64, slack: &SlackPolicy) -> Result<BoundInterval> {
    if !(sigma2 >= 0.0) {
        return Err(invalid("sigma2 must be non-negative"));
    }
    let st = setup(s, n, 0.25, "noise-term bound")?;
    let (nf, r, rho) = (st.n, st.f.r_n, st.f.rho);
    let nr = nf * r;
    let lower = sigma2 * nr * (1.0 + 2.0 * nr) * (1.0 - 4.0 * rho);
    let upper = sigma2 * nr * (1.0 + 2.0 * nr / (1.0 - 4.0 * rho).powi(2)) * (1.0 + slack.o1);
    BoundInterval::new(lower, upper, "E[eps^T A^-1 X Sigma X^T A^-1 eps]", *slack)
}

/// Bounds on `E[βᵀ Π_X Σ Π_X β]`.
pub fn proj_sigma_proj_bounds(
    s: &Spectrum,
    beta: &BetaCoefficients,
    n: usize,
    slack: &SlackPolicy,
) -> Result<BoundInterval> {
    if beta.d() != s.d() {
        return Err(Error::DimensionMismatch { expected: s.d(), found: beta.d() });
    }
    let st = setup(s, n, 0.25, "projected-covariance bound")?;
    let (nf, l, r, rho) = (st.n, st.l, st.f.r_n, st.f.rho);
    let nr = nf * r;
    let (b1, b3, b4) = (beta.power_form(s, 1), beta.power_form(s, 3), beta.power_form(s, 4));
    let lower = (1.0 - slack.o1) * nf * nf * (1.0 + nr).powi(2) / (l * l) * b3
        - 2.0 * nf.powi(3) / l.powi(3) * b4
        + (1.0 - slack.o1) * nr * (1.0 + 2.0 * nr) * (1.0 - 4.0 * rho) * b1;
    let upper = (1.0 + slack.o1) * nf * nf * (1.0 + nr / (1.0 - 4.0 * rho).powi(3)).powi(2) / (l * l) * b3
        + (1.0 + slack.o1) * nr * (1.0 + nr / (1.0 - 2.0 * rho).powi(2)) * b1;
    BoundInterval::new(lower, upper, "E[beta^T Pi_X Sigma Pi_X beta]", *slack)
}

/// Leading-order prediction of the optimal inflation constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryPrediction {
    pub c_opt_pred: f64,
    pub q: f64,
    /// `(n/d) βᵀΣ²β`.
    pub numerator: f64,
    /// `(n²/d²) βᵀΣ³β`.
    pub denom_signal: f64,
    /// `(1+σ²) n r(n)`.
    pub denom_noise: f64,
    pub c1: f64,
    pub c_noise: f64,
    /// Guaranteed improvement factor, present when the witnesses are finite.
    pub alpha: Option<f64>,
    pub q_threshold: Option<f64>,
}

pub fn c_opt_prediction(s: &Spectrum, beta: &BetaCoefficients, n: usize, sigma2: f64) -> Result<TheoryPrediction> {
    if beta.d() != s.d() {
        return Err(Error::DimensionMismatch { expected: s.d(), found: beta.d() });
    }
    let f = functionals(s, n);
    let ratio = n as f64 / s.d() as f64;
    let numerator = ratio * beta.power_form(s, 2);
    let denom_signal = ratio * ratio * beta.power_form(s, 3);
    let denom_noise = (1.0 + sigma2) * n as f64 * f.r_n;
    let denom = denom_signal + denom_noise;
    if !(denom > 0.0) {
        return Err(Error::Degenerate("prediction denominator is zero".into()));
    }
    let q = numerator;
    let c1 = denom_signal / (q * q);
    let c_noise = denom_noise / (q * q);
    let (alpha, q_threshold) = if (c1 + c_noise).is_finite() {
        let (a, t) = multiplicative_alpha(c1, c_noise)?;
        (Some(a), Some(t))
    } else {
        (None, None)
    };
    Ok(TheoryPrediction {
        c_opt_pred: numerator / denom,
        q,
        numerator,
        denom_signal,
        denom_noise,
        c1,
        c_noise,
        alpha,
        q_threshold,
    })
}

/// `α = 1 - 1/(18 (C₁ + C_noise))` and the threshold `q < 1/(216 (C₁ + C_noise))`.
pub fn multiplicative_alpha(c1: f64, c_noise: f64) -> Result<(f64, f64)> {
    let total = c1 + c_noise;
    if !(total > 0.0) {
        return Err(invalid("C1 + C_noise must be positive"));
    }
    Ok((1.0 - 1.0 / (18.0 * total), 1.0 / (216.0 * total)))
}

/// `E[zᵀBz · zᵀCz]`, or `E[zᵀBz · zᵀCz · zᵀDz]` when `d` is given, for
/// standard normal `z`. Only the symmetric parts of the matrices matter.
pub fn quadratic_form_moments(b: &DMatrix<f64>, c: &DMatrix<f64>, d: Option<&DMatrix<f64>>) -> Result<f64> {
    let k = b.nrows();
    let all = [Some(b), Some(c), d];
    for m in all.iter().flatten() {
        if m.nrows() != m.ncols() {
            return Err(invalid("matrices must be square"));
        }
        if m.nrows() != k {
            return Err(Error::DimensionMismatch { expected: k, found: m.nrows() });
        }
    }
    if k == 0 || k > 16 {
        return Err(invalid(format!("dimension must lie in [1, 16], got {k}")));
    }
    let b = symmetric_part(b);
    let c = symmetric_part(c);
    let tr_bc = (&b * &c).trace();
    match d {
        None => Ok(2.0 * tr_bc + b.trace() * c.trace()),
        Some(d) => {
            let d = symmetric_part(d);
            let (tb, tc, td) = (b.trace(), c.trace(), d.trace());
            let cd = &c * &d;
            Ok(tb * tc * td
                + 2.0 * (tb * cd.trace() + tc * (&b * &d).trace() + td * tr_bc)
                + 8.0 * (&b * cd).trace())
        }
    }
}

/// Monte Carlo estimate of the effective noise level
/// `E[tr(Σ Xᵀ A⁻¹ Λ A⁻¹ X)] / E[tr(Σ Xᵀ A⁻² X)]` with `Λ = diag(E[εᵢ² | xᵢ])`.
/// Returns the ratio of means and its delta-method standard error.
pub fn sigma2_functional_mc(s: &Spectrum, n: usize, noise: &NoiseModel, plan: &McPlan) -> Result<(f64, f64)> {
    if plan.replicates < 2 {
        return Err(invalid("need at least 2 replicates"));
    }
    let beta = BetaCoefficients::raw(vec![0.0; s.d()]);
    let trace = s.trace();
    let out = run_replicates(plan, |lin| {
        let sample = crate::sampling::sample_design(s, n, &NoiseModel::none(), &beta, lin)?;
        let gf = gram_factorize(&sample)?;
        let inv = gf.inverse();
        let m = weighted_gram(sample.x().as_view(), s.eigenvalues());
        let lam = DVector::from_iterator(
            n,
            sample.x().row_iter().map(|r| noise.conditional_variance(r.norm_squared(), trace)),
        );
        // tr(A⁻¹ Λ A⁻¹ M) and tr(A⁻² M).
        let inv_m_inv = &inv * &m * &inv;
        let num: f64 = (0..n).map(|i| lam[i] * inv_m_inv[(i, i)]).sum();
        let den = inv_m_inv.trace();
        Ok((num, den))
    });
    let r = out.values.len();
    if r < 2 {
        return Err(Error::Degenerate("too few successful replicates".into()));
    }
    let num: Vec<f64> = out.values.iter().map(|v| v.0).collect();
    let den: Vec<f64> = out.values.iter().map(|v| v.1).collect();
    let (mn, md) = (mean(&num), mean(&den));
    let ratio = mn / md;
    let rf = r as f64;
    let var = (covariance(&num, &num) - 2.0 * ratio * covariance(&num, &den)
        + ratio * ratio * covariance(&den, &den))
        / (rf * md * md);
    Ok((ratio, var.max(0.0).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::make_beta_topk;
    use crate::spectrum::{make_block_spectrum, make_spiked_spectrum};

    #[test]
    fn alpha_examples() {
        let (a, t) = multiplicative_alpha(1.0, 0.0).unwrap();
        assert!((a - 17.0 / 18.0).abs() < 1e-15);
        assert!((t - 1.0 / 216.0).abs() < 1e-15);
        let (a, t) = multiplicative_alpha(1.0, 1.0).unwrap();
        assert!((a - 35.0 / 36.0).abs() < 1e-15);
        assert!((t - 1.0 / 432.0).abs() < 1e-15);
        assert!(multiplicative_alpha(1e12, 0.0).unwrap().0 > 1.0 - 1e-12);
        assert!(multiplicative_alpha(0.0, 0.0).is_err());
    }

    #[test]
    fn block_prediction() {
        let s = make_block_spectrum(100, 100_000, 0.1).unwrap();
        let b = make_beta_topk(&s, 100).unwrap();
        let p = c_opt_prediction(&s, &b, 100, 0.0).unwrap();
        assert!((p.numerator - 0.1).abs() < 1e-12);
        assert!((p.denom_signal - 0.01).abs() < 1e-12);
        let nr = 100.0 * functionals(&s, 100).r_n;
        assert!((p.denom_noise - nr).abs() < 1e-15);
        assert!((p.denom_noise - 0.01081).abs() < 1e-5);
        assert!((p.c_opt_pred - 0.1 / (0.01 + nr)).abs() < 1e-12);
        assert!((p.c_opt_pred - 4.805).abs() < 1e-3);
    }

    #[test]
    fn isotropic_prediction_below_one() {
        let s = Spectrum::isotropic(500).unwrap();
        let b = make_beta_topk(&s, 500).unwrap();
        let p = c_opt_prediction(&s, &b, 50, 0.0).unwrap();
        assert!((p.c_opt_pred - 1.0 / 1.1).abs() < 1e-12);
    }

    #[test]
    fn spiked_prediction_above_one() {
        let s = make_spiked_spectrum(2000, 2.0).unwrap();
        let b = make_beta_topk(&s, 1).unwrap();
        let p = c_opt_prediction(&s, &b, 100, 1.0 / 6.0).unwrap();
        assert!(p.c_opt_pred > 1.0, "{}", p.c_opt_pred);
    }

    #[test]
    fn isotropic_intervals() {
        let s = Spectrum::isotropic(500).unwrap();
        let slack = SlackPolicy::default();
        let (n, d) = (50.0, 500.0);
        let rho = n / d;
        let t = trace_inverse_bounds(&s, 50, 1, &slack).unwrap();
        assert!((t.lower - n / d * (1.0 + n / d * (1.0 - 4.0 * rho))).abs() < 1e-14);
        assert!((t.upper - n / d * (1.0 + n / d / (1.0 - 2.0 * rho).powi(2))).abs() < 1e-14);
        let p = projection_diag_bounds(&s, 50, 7, &slack).unwrap();
        assert!(p.contains(0.1, 0.0));
        let b = make_beta_topk(&s, 500).unwrap();
        let q = proj_sigma_proj_bounds(&s, &b, 50, &slack).unwrap();
        assert!(q.contains(0.1, 0.0));
        let z = noise_term_bounds(&s, 50, 0.0, &slack).unwrap();
        assert_eq!((z.lower, z.upper), (0.0, 0.0));
    }

    #[test]
    fn preconditions_are_enforced() {
        let s = make_block_spectrum(10, 100, 0.125).unwrap();
        let slack = SlackPolicy::default();
        // λ₁ = 1.25 > d/(4n) = 2.5 is false, so these pass; a larger n breaks them.
        assert!(projection_diag_bounds(&s, 10, 0, &slack).is_ok());
        assert!(matches!(projection_diag_bounds(&s, 30, 0, &slack), Err(Error::Precondition(_))));
        assert!(trace_inverse_bounds(&s, 10, 3, &slack).is_err());
    }

    #[test]
    fn quadratic_forms_closed_form() {
        let i = DMatrix::<f64>::identity(4, 4);
        assert_eq!(quadratic_form_moments(&i, &i, None).unwrap(), 24.0);
        assert_eq!(quadratic_form_moments(&i, &DMatrix::zeros(4, 4), None).unwrap(), 0.0);
        // k(k+2)(k+4) for three identities.
        assert_eq!(quadratic_form_moments(&i, &i, Some(&i)).unwrap(), 4.0 * 6.0 * 8.0);
        assert!(quadratic_form_moments(&i, &DMatrix::identity(3, 3), None).is_err());
        let big = DMatrix::<f64>::identity(17, 17);
        assert!(quadratic_form_moments(&big, &big, None).is_err());
    }

    #[test]
    fn three_form_with_identity_factorizes() {
        let b = DMatrix::from_fn(5, 5, |i, j| ((i * 5 + j) as f64 * 0.7).sin());
        let c = DMatrix::from_fn(5, 5, |i, j| ((i + 2 * j) as f64 * 0.3).cos());
        let i = DMatrix::<f64>::identity(5, 5);
        let two = quadratic_form_moments(&b, &c, None).unwrap();
        let three = quadratic_form_moments(&b, &c, Some(&(&i * 2.5))).unwrap();
        assert!((three - 2.5 * 9.0 * two).abs() < 1e-10 * three.abs());
    }
}
