use std::sync::Arc;

use wbary::backend::{Backend, EntropicBackend};
use wbary::datagen::{
    random_orthonormal_basis, render_sample, render_template, sample_commuting, ImageTemplateSpec, TemplateKind,
};
use wbary::{EntropicConfig, ScatterLocationSpec};

#[test]
fn sample_moments_converge_to_the_template() {
    let (sa, se) = (0.3, 0.2);
    let spec = ScatterLocationSpec::new(
        vec![1.0, -2.0, 0.5, 0.0],
        vec![1.0, 1.5, 2.0, 2.5],
        Arc::new(random_orthonormal_basis(4, 3)),
        sa,
        se,
    )
    .unwrap();
    let n = 4000;
    let sample = sample_commuting(&spec, n, 1).unwrap();
    let template = spec.template().unwrap();
    for k in 0..4 {
        let mean = sample.iter().map(|m| m.mean()[k]).sum::<f64>() / n as f64;
        let lam = sample.iter().map(|m| m.sqrt_eigs()[k]).sum::<f64>() / n as f64;
        // standard deviations are at most the untruncated ones: sa and se·λ₀
        assert!((mean - template.mean()[k]).abs() <= 4.0 * sa / (n as f64).sqrt());
        assert!((lam - template.sqrt_eigs()[k]).abs() <= 4.0 * se * template.sqrt_eigs()[k] / (n as f64).sqrt());
    }
}

#[test]
fn draws_are_deterministic_per_seed() {
    let spec = ImageTemplateSpec::new(TemplateKind::CurvedTriangle, 20, 20);
    let a = render_sample::<f64>(&spec, 3, 9).unwrap();
    let b = render_sample::<f64>(&spec, 3, 9).unwrap();
    let c = render_sample::<f64>(&spec, 3, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn circle_barycenter_sits_closer_to_the_template_than_single_draws() {
    let spec = ImageTemplateSpec::new(TemplateKind::ConcentricCircles, 32, 32);
    let backend = EntropicBackend::debiased(EntropicConfig::default()).unwrap();
    // entropic barycenters are blurred; compare against the equally blurred template
    let template = backend.barycenter(&[render_template(&spec).unwrap()]).unwrap();
    let sample = render_sample::<f64>(&spec, 20, 2).unwrap();
    let single = sample
        .iter()
        .map(|m| {
            backend
                .distance(&backend.barycenter(std::slice::from_ref(m)).unwrap(), &template)
                .unwrap()
        })
        .sum::<f64>()
        / sample.len() as f64;
    let bar = backend
        .distance(&backend.barycenter(&sample).unwrap(), &template)
        .unwrap();
    assert!(2.0 * bar <= single, "barycenter {bar}, single draws {single}");
    let ellipse = backend
        .barycenter(&[render_template(&ImageTemplateSpec::new(TemplateKind::Ellipse, 32, 32)).unwrap()])
        .unwrap();
    let to_ellipse = backend
        .distance(&backend.barycenter(&sample).unwrap(), &ellipse)
        .unwrap();
    assert!(to_ellipse > 2.0 * bar, "ellipse {to_ellipse}, template {bar}");
}
