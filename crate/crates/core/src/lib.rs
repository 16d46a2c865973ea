//! Minimum-norm interpolation in high-dimensional linear regression, and the
//! scalar inflation, ridge and data-splitting estimators built on top of it.
//!
//! Designs are drawn in the covariance eigenbasis: a [`Spectrum`] holds the
//! eigenvalues, [`BetaCoefficients`] the true parameter in that basis, and
//! every replicate draws `x_ij = sqrt(lambda_j) z_ij` with standard normal `z`.
//! Monte Carlo risk summaries, analytic bound intervals and the scenario
//! harness are layered on top.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod risk;
pub mod rng;
pub mod sampling;
pub mod spectrum;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
pub use estimators::{
    data_split, estimate_c_star, gram_factorize, min_norm, ridge, ridge_with_margin,
    shrink_toward, unbiased_attempt, DataSplit, EstimateVector, GramFactor, Holdout,
    Provenance, DEFAULT_RIDGE_MARGIN,
};

pub use harness::{
    evaluate_scenario, run_acceptance_suite, run_scenario, AcceptanceSummary, ExperimentConfig,
    ScenarioKind, ScenarioReport, Tier, Verdict,
};
pub use risk::{
    empirical_c_opt, excess_risk, inflation_curve, mc_risk_summary, ridge_curve,
    risk_derivative_at_zero, Control, EstimatorRecipe, McPlan, RidgeCurve, RiskCurve, RiskSummary,
    ScenarioInputs,
};
pub use rng::{derived_seed, Purpose, SeedLineage};
pub use sampling::{make_beta_custom, make_beta_topk, sample_design, snr, BetaCoefficients, DesignSample, NoiseKind,
    NoiseModel,
};
pub use spectrum::{
    check_assumptions, check_assumptions_with, functionals, make_block_spectrum,
    make_direction_shrink_spectrum, make_power_law_spectrum, make_spiked_spectrum,
    make_two_regime_spectrum, AssumptionReport, AssumptionSet, AssumptionSlack, Functionals,
    Spectrum, SpectrumOrigin, Violation, Witnesses,
};
pub use theory::{
    c_opt_prediction, multiplicative_alpha, noise_term_bounds, proj_sigma_proj_bounds,
    projection_diag_bounds, quadratic_form_moments, sigma2_functional_mc, trace_inverse_bounds,
    BoundInterval, SlackPolicy, TheoryPrediction,
};
