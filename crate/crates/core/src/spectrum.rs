//! Covariance spectra, their scalar functionals and assumption diagnostics.
//!
//! A [`Spectrum`] is the descending eigenvalue sequence of `Σ`. Eigenvectors
//! are never stored: every design is generated directly in the eigenbasis.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sampling::BetaCoefficients;

/// Relative tolerance used to accept a trace as normalized.
pub const TRACE_TOL: f64 = 1e-12;

/// How a spectrum was built. Serialized alongside the eigenvalues.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "constructor", rename_all = "snake_case")]
pub enum SpectrumOrigin {
    Isotropic,
    Block { n: usize, q: f64 },
    PowerLaw { n: usize, a: f64, q: f64 },
    TwoRegime { n: usize, q: f64, a_min: f64, a0: f64, a1: f64, a2: f64 },
    Spiked { spike: f64 },
    DirectionShrink { n: usize, q: f64 },
    Custom,
}

/// Descending, strictly positive eigenvalues of a covariance matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    normalized: bool,
    origin: SpectrumOrigin,
}

impl Spectrum {
    /// Build from arbitrary positive values. They are sorted descending and,
    /// if `normalize` is set, rescaled so the trace equals `d`.
    pub fn from_eigenvalues(mut values: Vec<f64>, normalize: bool) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("spectrum needs at least one eigenvalue"));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(invalid(format!("eigenvalues must be finite and positive, got {bad}")));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self::assemble(values, normalize, SpectrumOrigin::Custom))
    }

    /// Identity covariance of dimension `d`.
    pub fn isotropic(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(invalid("d must be at least 1"));
        }
        Ok(Self::assemble(vec![1.0; d], true, SpectrumOrigin::Isotropic))
    }

    fn assemble(mut values: Vec<f64>, normalize: bool, origin: SpectrumOrigin) -> Self {
        if normalize {
            let d = values.len() as f64;
            let scale = d / crate::stats::pairwise_sum(&values);
            values.iter_mut().for_each(|v| *v *= scale);
        }
        Self { eigenvalues: values, normalized: normalize, origin }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn d(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn origin(&self) -> &SpectrumOrigin {
        &self.origin
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_min(&self) -> f64 {
        *self.eigenvalues.last().expect("spectrum is never empty")
    }

    pub fn trace(&self) -> f64 {
        crate::stats::pairwise_sum(&self.eigenvalues)
    }

    /// Whether every eigenvalue equals one, i.e. `Σ = I`.
    pub fn is_identity(&self) -> bool {
        self.eigenvalues.iter().all(|&v| (v - 1.0).abs() <= 1e-12)
    }

    /// `Σᵢ λᵢ^p wᵢ`, the building block of every `βᵀΣᵖβ` style contraction.
    pub fn weighted_power_sum(&self, w: &[f64], p: i32) -> f64 {
        let terms: Vec<f64> =
            self.eigenvalues.iter().zip(w).map(|(l, w)| l.powi(p) * w).collect();
        crate::stats::pairwise_sum(&terms)
    }

    /// Write one `eigenvalue` column as CSV and a JSON header next to it.
    pub fn write(&self, csv_path: &Path, header_path: &Path, n: Option<usize>) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path)?;
        w.write_record(["eigenvalue"])?;
        for v in &self.eigenvalues {
            w.write_record([format!("{v:e}")])?;
        }
        w.flush()?;
        let header = SpectrumHeader {
            d: self.d(),
            n,
            normalized: self.normalized,
            origin: self.origin.clone(),
        };
        let mut f = BufWriter::new(File::create(header_path)?);
        serde_json::to_writer_pretty(&mut f, &header)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    /// Read back a spectrum written by [`Spectrum::write`].
    pub fn read(csv_path: &Path, header_path: &Path) -> Result<Self> {
        let header: SpectrumHeader =
            serde_json::from_reader(BufReader::new(File::open(header_path)?))?;
        let mut r = csv::Reader::from_path(csv_path)?;
        let mut values = Vec::with_capacity(header.d);
        for rec in r.records() {
            let rec = rec?;
            let v: f64 = rec[0]
                .trim()
                .parse()
                .map_err(|e| invalid(format!("bad eigenvalue {:?}: {e}", &rec[0])))?;
            values.push(v);
        }
        if values.len() != header.d {
            return Err(Error::DimensionMismatch { expected: header.d, found: values.len() });
        }
        let mut s = Spectrum::from_eigenvalues(values, false)?;
        s.normalized = header.normalized;
        s.origin = header.origin;
        Ok(s)
    }
}

#[derive(Serialize, Deserialize)]
struct SpectrumHeader {
    d: usize,
    n: Option<usize>,
    normalized: bool,
    origin: SpectrumOrigin,
}

/// Block model: `n` eigenvalues equal to `q d/n`, the remaining `d - n` equal
/// to `d/(d-n) (1-q)`. The trace is `d` by construction.
pub fn make_block_spectrum(n: usize, d: usize, q: f64) -> Result<Spectrum> {
    if n == 0 || d <= n {
        return Err(invalid(format!("block spectrum needs d > n >= 1, got n={n}, d={d}")));
    }
    if !(q > 0.0 && q <= 0.125) {
        return Err(invalid(format!("block spectrum needs q in (0, 1/8], got {q}")));
    }
    let (nf, df) = (n as f64, d as f64);
    let top = q * df / nf;
    let tail = df / (df - nf) * (1.0 - q);
    if top <= tail {
        return Err(Error::Unseparated(format!("top value {top} <= tail value {tail}")));
    }
    let mut values = vec![top; n];
    values.resize(d, tail);
    Ok(Spectrum::assemble(values, true, SpectrumOrigin::Block { n, q }))
}

/// Power law `λᵢ = κ i^(-a)` with `κ` chosen so that the trace is `d`.
///
/// `q` only labels the spectrum; normalization removes it from the values.
/// With `enforce` set, spectra violating `λ₁ ≤ d/(8n)` are rejected, and
/// `d > n` is required.
pub fn make_power_law_spectrum(
    n: usize,
    d: usize,
    a: f64,
    q: f64,
    enforce: bool,
) -> Result<Spectrum> {
    if d == 0 {
        return Err(invalid("d must be at least 1"));
    }
    if !(a > 0.0 && a < 1.0) {
        return Err(invalid(format!("power-law exponent must lie in (0, 1), got {a}")));
    }
    let values: Vec<f64> = (1..=d).map(|i| (i as f64).powf(-a)).collect();
    let s = Spectrum::assemble(values, true, SpectrumOrigin::PowerLaw { n, a, q });
    if enforce {
        if n == 0 || d <= n {
            return Err(invalid(format!("power law needs d > n >= 1, got n={n}, d={d}")));
        }
        let cap = d as f64 / (8.0 * n as f64);
        if s.lambda_max() > cap {
            return Err(Error::Precondition(format!(
                "lambda_1 = {} exceeds d/(8n) = {cap}",
                s.lambda_max()
            )));
        }
    }
    Ok(s)
}

/// Two-regime spectrum: head `q (d/n)(a_min + i^(-a0))` for `i ≤ n`, tail
/// `(d/n)^(-a1) (i-n+1)^(-a2)` for `i > n`, both scaled by one common constant
/// so that the trace is `d`.
pub fn make_two_regime_spectrum(
    n: usize,
    d: usize,
    q: f64,
    a_min: f64,
    a0: f64,
    a1: f64,
    a2: f64,
) -> Result<Spectrum> {
    if n == 0 || d <= n {
        return Err(invalid(format!("two-regime spectrum needs d > n >= 1, got n={n}, d={d}")));
    }
    if !(q > 0.0) || !(0.0..1.0).contains(&a_min) || !(a0 >= 0.0) {
        return Err(invalid("two-regime head needs q > 0, a_min in [0, 1), a0 >= 0"));
    }
    if !(a1 > 0.0 && a1 < 1.0 && a2 > 0.0 && a2 < 1.0) {
        return Err(invalid("two-regime tail exponents must lie in (0, 1)"));
    }
    let ratio = d as f64 / n as f64;
    let head = |i: usize| q * ratio * (a_min + (i as f64).powf(-a0));
    let tail = |i: usize| ratio.powf(-a1) * ((i - n + 1) as f64).powf(-a2);
    let (last_head, first_tail) = (head(n), tail(n + 1));
    if !(last_head > 0.0) || first_tail > last_head {
        return Err(Error::Unseparated(format!(
            "tail starts at {first_tail}, above the last head value {last_head}"
        )));
    }
    let values: Vec<f64> = (1..=d).map(|i| if i <= n { head(i) } else { tail(i) }).collect();
    Ok(Spectrum::assemble(
        values,
        true,
        SpectrumOrigin::TwoRegime { n, q, a_min, a0, a1, a2 },
    ))
}

/// `Σ = I + v vᵀ` with `‖v‖² = spike`: eigenvalues `(1 + spike, 1, ..., 1)`.
/// Not trace-normalized.
pub fn make_spiked_spectrum(d: usize, spike: f64) -> Result<Spectrum> {
    if d == 0 {
        return Err(invalid("d must be at least 1"));
    }
    if !(spike >= 0.0 && spike.is_finite()) {
        return Err(invalid(format!("spike must be finite and non-negative, got {spike}")));
    }
    let mut values = vec![1.0; d];
    values[0] += spike;
    Ok(Spectrum::assemble(values, false, SpectrumOrigin::Spiked { spike }))
}

/// Whether a spike satisfies `‖v‖² ≤ d/(10 n)`, the regime in which the
/// spiked model shows inflation.
pub fn spike_within_bound(spike: f64, n: usize, d: usize) -> bool {
    spike <= d as f64 / (10.0 * n as f64)
}

/// The adversarial covariance used against shrinking toward a fixed
/// direction: `q d/n` along `e₁` and `ε = 1 - 1/d - q/n` elsewhere.
/// Not normalized.
pub fn make_direction_shrink_spectrum(n: usize, d: usize, q: f64) -> Result<Spectrum> {
    if n == 0 || d <= n {
        return Err(invalid(format!("needs d > n >= 1, got n={n}, d={d}")));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid(format!("q must lie in (0, 1), got {q}")));
    }
    let (nf, df) = (n as f64, d as f64);
    let eps = 1.0 - 1.0 / df - q / nf;
    let mut values = vec![eps; d];
    values[0] = q * df / nf;
    Ok(Spectrum::assemble(values, false, SpectrumOrigin::DirectionShrink { n, q }))
}

/// Scalar summaries of a spectrum at sample size `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Functionals {
    pub d: usize,
    pub n: usize,
    pub trace: f64,
    /// `tr(Σ²)`.
    pub trace_sq: f64,
    /// `tr(Σ²) / tr(Σ)²`.
    pub r_n: f64,
    /// `tr(Σ) / λ₁`.
    pub eff_rank: f64,
    /// `tr(Σ)² / tr(Σ²) = 1 / r_n`.
    pub eff_rank_sq: f64,
    /// `(n/d) λ₁`.
    pub rho: f64,
    /// Alias of `rho`.
    pub q_cap: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
}

pub fn functionals(s: &Spectrum, n: usize) -> Functionals {
    let ev = s.eigenvalues();
    let trace = crate::stats::pairwise_sum(ev);
    let sq: Vec<f64> = ev.iter().map(|v| v * v).collect();
    let trace_sq = crate::stats::pairwise_sum(&sq);
    let r_n = trace_sq / (trace * trace);
    let rho = n as f64 / s.d() as f64 * s.lambda_max();
    Functionals {
        d: s.d(),
        n,
        trace,
        trace_sq,
        r_n,
        eff_rank: trace / s.lambda_max(),
        eff_rank_sq: 1.0 / r_n,
        rho,
        q_cap: rho,
        lambda_max: s.lambda_max(),
        lambda_min: s.lambda_min(),
    }
}

/// Which assumption family to check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionSet {
    Additive,
    Weak,
    Strong,
    RateImprovement,
}

impl fmt::Display for AssumptionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AssumptionSet::Additive => "additive",
            AssumptionSet::Weak => "weak",
            AssumptionSet::Strong => "strong",
            AssumptionSet::RateImprovement => "rate_improvement",
        };
        f.write_str(s)
    }
}

/// Finite stand-ins for the asymptotic clauses. Every value used is echoed
/// in the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssumptionSlack {
    /// Value accepted for an `o(1)` quantity.
    pub o1: f64,
    /// Relative tolerance for `tr(Σ) = d` and `βᵀΣβ = 1`.
    pub normalization_tol: f64,
    pub alpha_min: f64,
    pub alpha_prime: f64,
    pub alpha_noise: f64,
    /// `card(K_n) = O(n)` is read as `card(K_n) ≤ card_factor · n`.
    pub card_factor: f64,
    /// Optional caps on the weak-set witnesses. Unset means the clause only
    /// requires a finite witness.
    pub c1_max: Option<f64>,
    pub c_noise_max: Option<f64>,
}

impl Default for AssumptionSlack {
    fn default() -> Self {
        Self {
            o1: 0.2,
            normalization_tol: 1e-8,
            alpha_min: 0.5,
            alpha_prime: 0.1,
            alpha_noise: 1.0,
            card_factor: 2.0,
            c1_max: None,
            c_noise_max: None,
        }
    }
}

/// One failed clause.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub clause: String,
    pub measured: f64,
    pub required: String,
}

/// Quantities measured while checking, reusable by the theory module.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witnesses {
    /// `(n/d) βᵀΣ²β`.
    pub q: f64,
    /// `(n/d) λ₁`.
    pub q_max: f64,
    /// `(n²/d²) βᵀΣ³β / q²`.
    pub c1: f64,
    /// `(1+σ²) n r(n) / q²`.
    pub c_noise: f64,
    /// `(n/d) βᵀΣ²β − (1+σ²_max)(n/d²) tr(Σ²)`.
    pub additive_margin: f64,
    /// Size of the dominant index set `K_n`.
    pub card_k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub assumption_set: AssumptionSet,
    passed: bool,
    violations: Vec<Violation>,
    pub witnesses: Witnesses,
    pub slack: AssumptionSlack,
    pub notes: Vec<String>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.passed
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    pub fn violates(&self, clause: &str) -> bool {
        self.violations.iter().any(|v| v.clause == clause)
    }
}

/// Check an assumption family with the default slack constants.
pub fn check_assumptions(
    s: &Spectrum,
    beta: &BetaCoefficients,
    n: usize,
    sigma2: f64,
    sigma_max2: f64,
    set: AssumptionSet,
) -> Result<AssumptionReport> {
    check_assumptions_with(s, beta, n, sigma2, sigma_max2, set, &AssumptionSlack::default())
}

struct Checker {
    prefix: &'static str,
    violations: Vec<Violation>,
}

impl Checker {
    fn require(&mut self, clause: &str, ok: bool, measured: f64, required: impl Into<String>) {
        if !ok {
            self.violations.push(Violation {
                clause: format!("{}.{clause}", self.prefix),
                measured,
                required: required.into(),
            });
        }
    }
}

pub fn check_assumptions_with(
    s: &Spectrum,
    beta: &BetaCoefficients,
    n: usize,
    sigma2: f64,
    sigma_max2: f64,
    set: AssumptionSet,
    slack: &AssumptionSlack,
) -> Result<AssumptionReport> {
    if beta.d() != s.d() {
        return Err(Error::DimensionMismatch { expected: s.d(), found: beta.d() });
    }
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let f = functionals(s, n);
    let (nf, df) = (n as f64, s.d() as f64);
    let c2: Vec<f64> = beta.coeffs().iter().map(|c| c * c).collect();
    let signal = s.weighted_power_sum(&c2, 1);
    let q = nf / df * s.weighted_power_sum(&c2, 2);
    let q_max = f.rho;
    let c1 = (nf / df).powi(2) * s.weighted_power_sum(&c2, 3) / (q * q);
    let noise_size = (1.0 + sigma2) * nf * f.r_n;
    let c_noise = noise_size / (q * q);
    let additive_margin = q - (1.0 + sigma_max2) * nf / (df * df) * f.trace_sq;
    let in_k: Vec<bool> = s
        .eigenvalues()
        .iter()
        .map(|l| {
            let scaled = nf / df * l;
            scaled >= slack.alpha_min * q_max && scaled <= q_max
        })
        .collect();
    let card_k = in_k.iter().filter(|b| **b).count();
    let witnesses = Witnesses { q, q_max, c1, c_noise, additive_margin, card_k };

    let mut notes = Vec::new();
    let mut ck = Checker { prefix: "", violations: Vec::new() };
    let lambda_floor = (-nf.sqrt()).exp() / df;

    let normalization = |ck: &mut Checker| {
        let tr_dev = (f.trace - df).abs() / df;
        ck.require("1.trace", tr_dev <= slack.normalization_tol, f.trace, format!("= d = {df}"));
        let sig_dev = (signal - 1.0).abs();
        ck.require("1.signal", sig_dev <= slack.normalization_tol, signal, "betaᵀ Σ beta = 1");
    };
    let eigen_caps = |ck: &mut Checker| {
        let cap = df / (8.0 * nf);
        ck.require("2.lambda_max", f.lambda_max <= cap, f.lambda_max, format!("<= d/(8n) = {cap}"));
        ck.require(
            "2.lambda_min",
            f.lambda_min >= lambda_floor,
            f.lambda_min,
            format!(">= exp(-sqrt(n))/d = {lambda_floor:e}"),
        );
    };
    let weak_clauses = |ck: &mut Checker, notes: &mut Vec<String>| {
        normalization(ck);
        eigen_caps(ck);
        let c1_ok = c1.is_finite() && slack.c1_max.is_none_or(|m| c1 <= m);
        ck.require("3.c1", c1_ok, c1, match slack.c1_max {
            Some(m) => format!("finite and <= {m}"),
            None => "finite".to_string(),
        });
        let cn_ok = c_noise.is_finite() && slack.c_noise_max.is_none_or(|m| c_noise <= m);
        ck.require("4.c_noise", cn_ok, c_noise, match slack.c_noise_max {
            Some(m) => format!("finite and <= {m}"),
            None => "finite".to_string(),
        });
        notes.push("noise clause evaluated with the sample size n in place of m".to_string());
    };

    match set {
        AssumptionSet::Additive => {
            ck.prefix = "additive";
            normalization(&mut ck);
            eigen_caps(&mut ck);
            // Positive beyond the rounding error of its two terms.
            let floor = 1e-12 * q.abs();
            ck.require("3.alignment", additive_margin > floor, additive_margin, "> 0");
        }
        AssumptionSet::Weak => {
            ck.prefix = "weak";
            weak_clauses(&mut ck, &mut notes);
        }
        AssumptionSet::Strong => {
            ck.prefix = "strong";
            normalization(&mut ck);
            ck.require("2.q_max", q_max > 0.0 && q_max <= 0.125, q_max, "in (0, 1/8]");
            ck.require(
                "2.lambda_min",
                f.lambda_min >= lambda_floor,
                f.lambda_min,
                format!(">= exp(-sqrt(n))/d = {lambda_floor:e}"),
            );
            let card_cap = slack.card_factor * nf;
            ck.require(
                "3.card_k",
                card_k >= 1 && card_k as f64 <= card_cap,
                card_k as f64,
                format!("in [1, {card_cap}]"),
            );
            // Eigenvalues are sorted, so K_n is a prefix and sup K_n is its length.
            let next = s.eigenvalues().get(card_k).map_or(0.0, |l| nf / df * l);
            ck.require("4.next_eigenvalue", next <= slack.o1, next, format!("<= {}", slack.o1));
            let mass_terms: Vec<f64> = s
                .eigenvalues()
                .iter()
                .zip(&c2)
                .zip(&in_k)
                .map(|((l, c), k)| if *k { l * c } else { 0.0 })
                .collect();
            let mass = crate::stats::pairwise_sum(&mass_terms);
            ck.require("5.alignment", mass > slack.alpha_prime, mass, format!("> {}", slack.alpha_prime));
            let noise_cap = slack.alpha_noise * q_max * q_max;
            ck.require("6.noise", noise_size <= noise_cap, noise_size, format!("<= {noise_cap}"));
        }
        AssumptionSet::RateImprovement => {
            ck.prefix = "weak";
            weak_clauses(&mut ck, &mut notes);
            ck.prefix = "rate";
            let sig3 = c1 * q * q;
            let cap = q * q * (1.0 + slack.o1);
            ck.require("2.signal_cubic", sig3 <= cap, sig3, format!("<= q²(1+{}) = {cap}", slack.o1));
            ck.require("3.noise", noise_size <= slack.o1, noise_size, format!("<= {}", slack.o1));
            let growth = if sigma_max2 > 0.0 { sigma_max2.ln() } else { f64::NEG_INFINITY };
            let growth_cap = slack.o1 * nf.cbrt();
            ck.require("4.sigma_max", growth <= growth_cap, growth, format!("ln <= {growth_cap}"));
        }
    }

    let violations = ck.violations;
    Ok(AssumptionReport {
        assumption_set: set,
        passed: violations.is_empty(),
        violations,
        witnesses,
        slack: slack.clone(),
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{make_beta_topk, BetaCoefficients};

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn block_values_and_trace() {
        let s = make_block_spectrum(10, 1000, 0.1).unwrap();
        assert!(close(s.eigenvalues()[0], 10.0, 1e-12));
        assert!(close(s.eigenvalues()[999], 0.9 * 1000.0 / 990.0, 1e-12));
        assert!(close(s.trace(), 1000.0, 1e-12));
    }

    #[test]
    fn block_rejects_unseparated_and_square() {
        assert!(matches!(make_block_spectrum(1, 2, 0.5), Err(Error::InvalidParameter(_))));
        assert!(matches!(make_block_spectrum(10, 50, 0.1), Err(Error::Unseparated(_))));
        assert!(make_block_spectrum(10, 10, 0.1).is_err());
    }

    #[test]
    fn block_functionals_large() {
        let s = make_block_spectrum(100, 100_000, 0.1).unwrap();
        let f = functionals(&s, 100);
        assert!(close(f.rho, 0.1, 1e-12));
        // 100·100² + 99900·(0.9·1e5/99900)² over 1e10.
        let tail = 0.9 * 1e5 / 99_900.0;
        let oracle = (1e6 + 99_900.0 * tail * tail) / 1e10;
        assert!(close(f.r_n, oracle, 1e-12));
        assert!(close(f.r_n, 1.081e-4, 1e-3));
    }

    #[test]
    fn power_law_normalization() {
        let s = make_power_law_spectrum(10, 100, 0.5, 0.1, false).unwrap();
        let z: f64 = (1..=100).map(|i| (i as f64).powf(-0.5)).sum();
        let kappa = 100.0 / z;
        assert!(close(kappa, 5.37935, 1e-5));
        assert!(close(s.eigenvalues()[0], kappa, 1e-12));
        assert!(close(s.eigenvalues()[99], kappa / 10.0, 1e-12));
        assert!(close(s.trace(), 100.0, 1e-12));

        let one = make_power_law_spectrum(1, 1, 0.5, 0.1, false).unwrap();
        assert_eq!(one.eigenvalues(), &[1.0]);

        let flat = make_power_law_spectrum(10, 100, 1e-9, 0.1, false).unwrap();
        assert!(flat.eigenvalues().iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn power_law_enforcement() {
        // κ ≈ 5.55 > 100/(8·10) = 1.25.
        assert!(matches!(
            make_power_law_spectrum(10, 100, 0.5, 0.1, true),
            Err(Error::Precondition(_))
        ));
        assert!(make_power_law_spectrum(10, 100_000, 0.5, 0.1, true).is_ok());
    }

    #[test]
    fn two_regime_values() {
        let s = make_two_regime_spectrum(10, 1000, 0.1, 0.5, 1.0, 0.5, 0.5).unwrap();
        let raw: Vec<f64> = (1..=1000usize)
            .map(|i| {
                if i <= 10 {
                    0.1 * 100.0 * (0.5 + 1.0 / i as f64)
                } else {
                    100f64.powf(-0.5) * ((i - 9) as f64).powf(-0.5)
                }
            })
            .collect();
        let scale = 1000.0 / raw.iter().sum::<f64>();
        for (got, want) in s.eigenvalues().iter().zip(&raw) {
            assert!(close(*got, want * scale, 1e-12));
        }
        assert!(close(s.trace(), 1000.0, 1e-12));
    }

    #[test]
    fn two_regime_rejects_broken_junction() {
        let r = make_two_regime_spectrum(10, 1000, 0.1, 0.0, 50.0, 0.5, 0.5);
        assert!(matches!(r, Err(Error::Unseparated(_))));
    }

    #[test]
    fn two_regime_flags_large_top_eigenvalue() {
        let s = make_two_regime_spectrum(10, 1000, 0.125, 0.5, 1.0, 0.5, 0.5).unwrap();
        let beta = make_beta_topk(&s, 10).unwrap();
        let rep = check_assumptions(&s, &beta, 10, 0.0, 0.0, AssumptionSet::Additive).unwrap();
        let cap = 1000.0 / 80.0;
        assert_eq!(s.lambda_max() > cap, rep.violates("additive.2.lambda_max"));
        assert!(rep.violates("additive.2.lambda_max"));
    }

    #[test]
    fn spiked_values() {
        assert_eq!(make_spiked_spectrum(4, 0.0).unwrap().eigenvalues(), &[1.0; 4]);
        assert_eq!(make_spiked_spectrum(4, 2.0).unwrap().eigenvalues(), &[3.0, 1.0, 1.0, 1.0]);
        assert!(!make_spiked_spectrum(4, 2.0).unwrap().is_normalized());
        assert!(spike_within_bound(2.0, 100, 2000));
        assert!(!spike_within_bound(2.01, 100, 2000));
    }

    #[test]
    fn functionals_small_cases() {
        let iso = Spectrum::isotropic(100).unwrap();
        let f = functionals(&iso, 10);
        assert!(close(f.r_n, 0.01, 1e-12));
        assert!(close(f.eff_rank, 100.0, 1e-12));
        assert!(close(f.rho, 0.1, 1e-12));

        let block = make_block_spectrum(10, 1000, 0.1).unwrap();
        let f = functionals(&block, 10);
        assert!(close(f.trace_sq, 1818.1818, 1e-6));
        assert!(close(f.r_n, 1.818e-3, 1e-3));

        let one = Spectrum::from_eigenvalues(vec![3.0], true).unwrap();
        let f = functionals(&one, 1);
        assert_eq!(f.r_n, 1.0);
        assert_eq!(f.eff_rank, 1.0);
    }

    #[test]
    fn weak_passes_on_block_with_unit_c1() {
        let s = make_block_spectrum(100, 100_000, 0.1).unwrap();
        let beta = make_beta_topk(&s, 100).unwrap();
        let rep = check_assumptions(&s, &beta, 100, 0.0, 0.0, AssumptionSet::Weak).unwrap();
        assert!(rep.passed(), "{:?}", rep.violations());
        assert!(close(rep.witnesses.q, 0.1, 1e-10));
        assert!(close(rep.witnesses.c1, 1.0, 1e-10));
    }

    #[test]
    fn additive_alignment_fails_isotropic() {
        let s = Spectrum::isotropic(100).unwrap();
        let beta = make_beta_topk(&s, 100).unwrap();
        let rep = check_assumptions(&s, &beta, 10, 0.0, 0.0, AssumptionSet::Additive).unwrap();
        assert!(!rep.passed());
        assert!(rep.violates("additive.3.alignment"));
        assert!(rep.witnesses.additive_margin.abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let s = Spectrum::isotropic(5).unwrap();
        let beta = BetaCoefficients::unit(3, 0);
        assert!(matches!(
            check_assumptions(&s, &beta, 2, 0.0, 0.0, AssumptionSet::Weak),
            Err(Error::DimensionMismatch { expected: 5, found: 3 })
        ));
    }

    #[test]
    fn spectrum_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = make_two_regime_spectrum(10, 200, 0.1, 0.5, 1.0, 0.5, 0.5).unwrap();
        let (c, h) = (dir.path().join("s.csv"), dir.path().join("s.json"));
        s.write(&c, &h, Some(10)).unwrap();
        let back = Spectrum::read(&c, &h).unwrap();
        assert_eq!(back, s);
    }
}
