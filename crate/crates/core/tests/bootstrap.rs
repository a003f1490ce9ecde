use std::sync::Arc;

use proptest::prelude::*;
use wbary::backend::{Backend, CommutingBackend, GaussianBackend};
use wbary::bootstrap::{
    bootstrap_statistic, bootstrap_statistic_commuting, calibrate_quantile, quantile_from_replicates, replicate_rng,
    BootstrapConfig, WeightLaw,
};
use wbary::datagen::{random_orthonormal_basis, sample_commuting};
use wbary::ScatterLocationSpec;
use wbary::{CommutingMeasure, Error};

fn spec(scale: f64) -> ScatterLocationSpec {
    ScatterLocationSpec::new(
        vec![scale, -scale, 0.0],
        vec![scale, 1.5 * scale, 2.0 * scale],
        Arc::new(random_orthonormal_basis(3, 7)),
        0.2 * scale,
        0.2,
    )
    .unwrap()
}

#[test]
fn weight_law_moments() {
    let n = 100_000;
    for (law, central4) in [
        (WeightLaw::Poisson1, 4.0),
        (WeightLaw::Exp1, 9.0),
        (WeightLaw::Normal11, 3.0),
    ] {
        let mut rng = replicate_rng(21, 0);
        let xs: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se_var = ((central4 - 1.0) / n as f64).sqrt();
        assert!(
            (mean - 1.0).abs() <= 3.0 * (1.0 / n as f64).sqrt(),
            "{law}: mean {mean}"
        );
        assert!((var - 1.0).abs() <= 3.0 * se_var, "{law}: var {var}");
        assert_eq!(law.is_nonnegative(), xs.iter().all(|&x| x >= 0.0));
    }
}

proptest! {
    #[test]
    fn quantile_is_nonincreasing_in_alpha(stats in prop::collection::vec(0.0f64..10.0, 1..300), a in 0.01f64..0.99, b in 0.01f64..0.99) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let z_lo = quantile_from_replicates(stats.clone(), lo).unwrap().z_alpha;
        let z_hi = quantile_from_replicates(stats.clone(), hi).unwrap().z_alpha;
        prop_assert!(z_lo >= z_hi);
        prop_assert!(stats.contains(&z_lo));
    }
}

#[test]
fn calibration_is_bit_identical_across_runs_and_thread_counts() {
    let sample = sample_commuting(&spec(1.0), 15, 1).unwrap();
    let cfg = BootstrapConfig::new(WeightLaw::Exp1, 300, 2, 0.05).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| calibrate_quantile(&CommutingBackend, &sample, &cfg).unwrap())
    };
    let (a, b, c) = (run(1), run(1), run(3));
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.replicate_stats), bits(&b.replicate_stats));
    assert_eq!(bits(&a.replicate_stats), bits(&c.replicate_stats));
    let other = calibrate_quantile(&CommutingBackend, &sample, &BootstrapConfig { seed: 3, ..cfg }).unwrap();
    assert_ne!(a.replicate_stats, other.replicate_stats);
}

#[test]
fn replicate_statistics_scale_with_the_family() {
    // scaling means and sqrt-eigenvalues by c scales every W₂ by c
    let cfg = BootstrapConfig::new(WeightLaw::Poisson1, 200, 5, 0.1).unwrap();
    let base = sample_commuting(&spec(1.0), 12, 4).unwrap();
    let scaled: Vec<CommutingMeasure> = base
        .iter()
        .map(|m| {
            let mean = m.mean().iter().map(|x| 2.5 * x).collect();
            let lam = m.sqrt_eigs().iter().map(|x| 2.5 * x).collect();
            CommutingMeasure::new(Arc::clone(m.basis()), mean, lam).unwrap()
        })
        .collect();
    let q1 = calibrate_quantile(&CommutingBackend, &base, &cfg).unwrap();
    let q2 = calibrate_quantile(&CommutingBackend, &scaled, &cfg).unwrap();
    for (a, b) in q1.replicate_stats.iter().zip(&q2.replicate_stats) {
        assert!((2.5 * a - b).abs() <= 1e-12 * (1.0 + b), "{a} {b}");
    }
}

#[test]
fn commuting_and_general_routes_agree_for_four_measures() {
    let sample = sample_commuting(&spec(1.0), 4, 9).unwrap();
    let gaussians: Vec<_> = sample.iter().map(|m| m.to_gaussian()).collect();
    let center = GaussianBackend.barycenter(&gaussians).unwrap();
    let mut rng = replicate_rng(10, 0);
    for _ in 0..5 {
        let w: Vec<f64> = WeightLaw::Exp1.draw(4, &mut rng).unwrap();
        let closed = bootstrap_statistic_commuting(&sample, &w).unwrap();
        let general = bootstrap_statistic(&GaussianBackend, &gaussians, &center, &w).unwrap();
        assert!(
            (closed - general).abs() <= 1e-8 * (1.0 + closed),
            "{closed} vs {general}"
        );
    }
}

#[test]
fn signed_weights_only_on_the_commuting_backend() {
    let sample = sample_commuting(&spec(1.0), 5, 11).unwrap();
    let cfg = BootstrapConfig::new(WeightLaw::Normal11, 50, 1, 0.05).unwrap();
    assert!(calibrate_quantile(&CommutingBackend, &sample, &cfg).is_ok());
    let gaussians: Vec<_> = sample.iter().map(|m| m.to_gaussian()).collect();
    assert!(matches!(
        calibrate_quantile(&GaussianBackend, &gaussians, &cfg),
        Err(Error::UnsupportedWeightLaw(..))
    ));
}
