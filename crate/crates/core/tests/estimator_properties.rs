//! Randomized invariants of the estimators, risk algebra and bounds.

use inflation_core::{
    check_assumptions_with, excess_risk, gram_factorize, make_beta_custom, make_beta_topk,
    make_block_spectrum, min_norm, quadratic_form_moments, ridge, risk::sigma_moments,
    sample_design, theory, AssumptionSet, AssumptionSlack, NoiseModel, Purpose, SeedLineage,
    SlackPolicy, Spectrum,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn instance(seed: u64, n: usize, extra: usize, eig: &[f64]) -> (Spectrum, inflation_core::BetaCoefficients, inflation_core::DesignSample) {
    let d = n + extra;
    let values: Vec<f64> = eig.iter().cycle().take(d).copied().collect();
    let s = Spectrum::from_eigenvalues(values, true).unwrap();
    let raw: Vec<f64> = (0..d).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
    let b = make_beta_custom(&s, &raw, true).unwrap();
    let noise = NoiseModel::homoscedastic(0.5).unwrap();
    let smp = sample_design(&s, n, &noise, &b, SeedLineage::new(seed, Purpose::Design, 0)).unwrap();
    (s, b, smp)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn min_norm_interpolates_and_lies_in_row_space(
        seed in any::<u64>(),
        n in 1usize..20,
        extra in 1usize..40,
        eig in prop::collection::vec(0.1f64..10.0, 1..6),
    ) {
        let (_, _, smp) = instance(seed, n, extra, &eig);
        let gf = gram_factorize(&smp).unwrap();
        let th = min_norm(&smp, &gf).unwrap();
        let resid = (smp.x() * th.coeffs() - smp.y()).norm();
        prop_assert!(resid <= 1e-8 * smp.y().norm().max(1.0));
        // θ = Xᵀw for w = A⁻¹y.
        let w = gf.solve(smp.y());
        prop_assert!((smp.x().transpose() * w - th.coeffs()).norm() <= 1e-9 * th.coeffs().norm().max(1.0));
    }

    #[test]
    fn risk_is_quadratic_in_the_inflation_constant(
        seed in any::<u64>(),
        n in 1usize..15,
        extra in 1usize..30,
        c in -3.0f64..6.0,
        eig in prop::collection::vec(0.1f64..10.0, 1..6),
    ) {
        let (s, b, smp) = instance(seed, n, extra, &eig);
        let th = min_norm(&smp, &gram_factorize(&smp).unwrap()).unwrap();
        let (a, bb) = sigma_moments(th.as_slice(), b.coeffs(), &s);
        let direct = excess_risk(&th.inflate(c), &b, &s).unwrap();
        let algebra = b.signal(&s) - 2.0 * c * a + c * c * bb;
        prop_assert!((direct - algebra).abs() <= 1e-9 * direct.abs().max(1.0));
    }

    #[test]
    fn ridge_shrinks_the_norm(
        seed in any::<u64>(),
        n in 2usize..15,
        extra in 1usize..30,
        lam in 0.01f64..100.0,
        eig in prop::collection::vec(0.1f64..10.0, 1..6),
    ) {
        let (_, _, smp) = instance(seed, n, extra, &eig);
        let gf = gram_factorize(&smp).unwrap();
        let mn = min_norm(&smp, &gf).unwrap();
        let r = ridge(&smp, &gf, lam).unwrap();
        prop_assert!(r.coeffs().norm() <= mn.coeffs().norm() * (1.0 + 1e-12));
    }

    #[test]
    fn bound_intervals_are_ordered(
        n in 10usize..200,
        mult in 20usize..200,
        q in 0.01f64..0.12,
    ) {
        let d = n * mult;
        prop_assume!(q * (d - n) as f64 > n as f64 * (1.0 - q));
        let s = make_block_spectrum(n, d, q).unwrap();
        let slack = SlackPolicy::default();
        for k in [1, 2] {
            if let Ok(b) = theory::trace_inverse_bounds(&s, n, k, &slack) {
                prop_assert!(b.lower <= b.upper);
            }
        }
        if let Ok(b) = theory::noise_term_bounds(&s, n, 1.0, &slack) {
            prop_assert!(b.lower <= b.upper);
        }
    }

    #[test]
    fn strong_assumptions_imply_weak(
        n in 10usize..120,
        mult in 20usize..400,
        q in 0.005f64..0.125,
        sigma2 in 0.0f64..2.0,
    ) {
        let d = n * mult;
        prop_assume!(q * (d - n) as f64 > n as f64 * (1.0 - q));
        let s = make_block_spectrum(n, d, q).unwrap();
        let b = make_beta_topk(&s, n).unwrap();
        let slack = AssumptionSlack { alpha_noise: 4.0, ..AssumptionSlack::default() };
        let strong = check_assumptions_with(&s, &b, n, sigma2, sigma2, AssumptionSet::Strong, &slack).unwrap();
        let weak = check_assumptions_with(&s, &b, n, sigma2, sigma2, AssumptionSet::Weak, &slack).unwrap();
        prop_assert!(!strong.passed() || weak.passed());
    }

    #[test]
    fn second_form_is_symmetric_in_its_arguments(
        entries in prop::collection::vec(-3.0f64..3.0, 32),
    ) {
        let b = DMatrix::from_row_slice(4, 4, &entries[..16]);
        let c = DMatrix::from_row_slice(4, 4, &entries[16..]);
        let bc = quadratic_form_moments(&b, &c, None).unwrap();
        let cb = quadratic_form_moments(&c, &b, None).unwrap();
        prop_assert!((bc - cb).abs() <= 1e-10 * bc.abs().max(1.0));
    }
}

#[test]
fn strong_assumptions_can_hold() {
    let s = make_block_spectrum(100, 100_000, 0.1).unwrap();
    let b = make_beta_topk(&s, 100).unwrap();
    let slack = AssumptionSlack { alpha_noise: 4.0, ..AssumptionSlack::default() };
    let rep = check_assumptions_with(&s, &b, 100, 0.0, 0.0, AssumptionSet::Strong, &slack).unwrap();
    assert!(rep.passed(), "{:?}", rep.violations());
}
