//! One test per acceptance criterion at the reference replicate counts.
//! Each prints a PASS/FAIL line with the measured and required values.

use inflation_core::harness::acceptance::{run_criterion, CRITERIA};
use inflation_core::Tier;

const SEED: u64 = 20_240_601;

fn check(id: u32) {
    let outcome = run_criterion(id, Tier::Full, SEED);
    println!("{}", outcome.line());
    assert!(outcome.passed, "{}", outcome.line());
}

#[test]
fn criteria_are_numbered_one_to_thirteen() {
    let ids: Vec<u32> = CRITERIA.iter().map(|c| c.0).collect();
    assert_eq!(ids, (1..=13).collect::<Vec<_>>());
}

#[test]
fn criterion_01_noiseless_isotropic_baseline() {
    check(1);
}

#[test]
fn criterion_02_block_model_inflation() {
    check(2);
}

#[test]
fn criterion_03_c_opt_formula_agreement() {
    check(3);
}

#[test]
fn criterion_04_trace_inverse_bounds() {
    check(4);
}

#[test]
fn criterion_05_projection_expectation() {
    check(5);
}

#[test]
fn criterion_06_noise_term_expectation() {
    check(6);
}

#[test]
fn criterion_07_isotropic_ridge_positivity() {
    check(7);
}

#[test]
fn criterion_08_spiked_covariance_inflation() {
    check(8);
}

#[test]
fn criterion_09_data_splitting() {
    check(9);
}

#[test]
fn criterion_10_unbiased_attempt_divergence() {
    check(10);
}

#[test]
fn criterion_11_direction_shrink_blow_up() {
    check(11);
}

#[test]
fn criterion_12_quadratic_form_moments() {
    check(12);
}

#[test]
fn criterion_13_estimator_invariants() {
    check(13);
}
