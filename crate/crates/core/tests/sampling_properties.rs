//! Monte Carlo properties of the design and noise samplers.

use inflation_core::{
    make_beta_topk, make_block_spectrum, sample_design, stats::MeanSe, NoiseKind, NoiseModel,
    Purpose, SeedLineage, Spectrum,
};

#[test]
fn row_second_moment_matches_covariance() {
    let s = make_block_spectrum(4, 60, 0.1).unwrap();
    let b = make_beta_topk(&s, 4).unwrap();
    let draws = 4000;
    let mut top = Vec::with_capacity(draws);
    let mut tail = Vec::with_capacity(draws);
    for r in 0..draws as u64 {
        let smp = sample_design(&s, 1, &NoiseModel::none(), &b, SeedLineage::new(5, Purpose::Design, r)).unwrap();
        top.push(smp.x()[(0, 0)].powi(2));
        tail.push(smp.x()[(0, 59)].powi(2));
    }
    let (mt, ml) = (MeanSe::of(&top), MeanSe::of(&tail));
    assert!(mt.within(s.eigenvalues()[0], 4.0), "{mt:?}");
    assert!(ml.within(s.eigenvalues()[59], 4.0), "{ml:?}");
}

#[test]
fn noise_variance_matches_model() {
    let s = Spectrum::isotropic(10).unwrap();
    let b = make_beta_topk(&s, 3).unwrap();
    let noise = NoiseModel::new(NoiseKind::Homoscedastic { sigma: 0.7 }).unwrap();
    let smp = sample_design(&s, 20_000, &noise, &b, SeedLineage::new(2, Purpose::Design, 0)).unwrap();
    let sq: Vec<f64> = smp.eps().iter().map(|e| e * e).collect();
    let m = MeanSe::of(&sq);
    assert!(m.within(0.49, 4.0), "{m:?}");
    let e = MeanSe::of(smp.eps().as_slice());
    assert!(e.within(0.0, 4.0), "{e:?}");
}

#[test]
fn heteroscedastic_noise_respects_its_cap() {
    let s = Spectrum::isotropic(50).unwrap();
    let b = make_beta_topk(&s, 5).unwrap();
    let noise = NoiseModel::new(NoiseKind::Heteroscedastic { sigma0: 1.0, sigma_max: 1.1 }).unwrap();
    let smp = sample_design(&s, 20_000, &noise, &b, SeedLineage::new(3, Purpose::Design, 0)).unwrap();
    let sq: Vec<f64> = smp.eps().iter().map(|e| e * e).collect();
    let m = MeanSe::of(&sq);
    assert!(m.within(noise.second_moment(&s), 4.0), "{m:?} vs {}", noise.second_moment(&s));
}

#[test]
fn design_does_not_depend_on_noise_model() {
    let s = make_block_spectrum(5, 100, 0.1).unwrap();
    let b = make_beta_topk(&s, 5).unwrap();
    let lin = SeedLineage::new(11, Purpose::Design, 7);
    let quiet = sample_design(&s, 5, &NoiseModel::none(), &b, lin).unwrap();
    let loud = sample_design(&s, 5, &NoiseModel::homoscedastic(3.0).unwrap(), &b, lin).unwrap();
    assert_eq!(quiet.x(), loud.x());
    assert_ne!(quiet.y(), loud.y());
}

#[test]
fn replicates_are_reproducible_and_distinct() {
    let s = Spectrum::isotropic(8).unwrap();
    let b = make_beta_topk(&s, 2).unwrap();
    let draw = |r| sample_design(&s, 3, &NoiseModel::none(), &b, SeedLineage::new(1, Purpose::Design, r)).unwrap();
    assert_eq!(draw(0).z(), draw(0).z());
    assert_ne!(draw(0).z(), draw(1).z());
}
