use std::sync::Arc;

use proptest::prelude::*;
use wbary::datagen::random_orthonormal_basis;
use wbary::gauss_ot::{
    barycenter_commuting, barycenter_fixed_point, optimal_map, w2_commuting, w2_frobenius_form, w2_gaussian,
};
use wbary::{CommutingMeasure, GaussianMeasure, Matrix, SpdMatrix};

fn gaussian(d: usize) -> impl Strategy<Value = GaussianMeasure> {
    (
        prop::collection::vec(-3.0f64..3.0, d),
        prop::collection::vec(-1.0f64..1.0, d * d),
    )
        .prop_map(move |(mean, v)| {
            let b = Matrix::from_row_major(d, d, v).unwrap();
            let mut s = &b * &b.transpose();
            for i in 0..d {
                s[(i, i)] += 0.1;
            }
            GaussianMeasure::new(mean, SpdMatrix::new(s.symmetrize()).unwrap()).unwrap()
        })
}

fn pair() -> impl Strategy<Value = (GaussianMeasure, GaussianMeasure)> {
    (1usize..=6).prop_flat_map(|d| (gaussian(d), gaussian(d)))
}

fn commuting_family() -> impl Strategy<Value = Vec<CommutingMeasure>> {
    (1usize..=5, 1usize..=8, any::<u64>()).prop_flat_map(|(d, n, seed)| {
        let basis = Arc::new(random_orthonormal_basis::<f64>(d, seed));
        prop::collection::vec(
            (
                prop::collection::vec(-2.0f64..2.0, d),
                prop::collection::vec(0.3f64..3.0, d),
            ),
            n,
        )
        .prop_map(move |ms| {
            ms.into_iter()
                .map(|(m, l)| CommutingMeasure::new(Arc::clone(&basis), m, l).unwrap())
                .collect()
        })
    })
}

proptest! {
    #[test]
    fn distance_is_symmetric_and_matches_frobenius_form((a, b) in pair()) {
        let ab = w2_gaussian(&a, &b).unwrap();
        let ba = w2_gaussian(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-9 * (1.0 + ab));
        let f = w2_frobenius_form(&a, &b).unwrap();
        prop_assert!((ab - f).abs() <= 1e-8 * (1.0 + ab));
        prop_assert!(w2_gaussian(&a, &a).unwrap() <= 1e-6);
    }

    #[test]
    fn optimal_map_pushes_source_to_target((a, b) in pair()) {
        let m = optimal_map(&a, &b).unwrap();
        let pushed = &(m.as_matrix() * a.cov().as_matrix()) * m.as_matrix();
        let s2 = b.cov().as_matrix();
        prop_assert!(pushed.max_abs_diff(s2) <= 1e-8 * (1.0 + s2.frobenius_norm()));
    }

    #[test]
    fn triangle_inequality((a, b) in pair(), seed in any::<u64>()) {
        // third measure: a rescaled copy of b's covariance, same dimension
        let d = a.dim();
        let c = GaussianMeasure::new(vec![0.5; d], SpdMatrix::new(b.cov().as_matrix().scale(1.0 + (seed % 7) as f64 / 7.0)).unwrap()).unwrap();
        let (ab, bc, ac) = (w2_gaussian(&a, &b).unwrap(), w2_gaussian(&b, &c).unwrap(), w2_gaussian(&a, &c).unwrap());
        prop_assert!(ac <= ab + bc + 1e-8);
    }

    #[test]
    fn fixed_point_agrees_with_commuting_closed_form(family in commuting_family()) {
        let n = family.len();
        let w = vec![1.0 / n as f64; n];
        let exact = barycenter_commuting(&family, &w).unwrap();
        let gaussians: Vec<_> = family.iter().map(|m| m.to_gaussian()).collect();
        let (fp, report) = barycenter_fixed_point(&gaussians, &w).unwrap();
        prop_assert!(report.converged);
        let e = exact.to_gaussian();
        prop_assert!(fp.cov().as_matrix().max_abs_diff(e.cov().as_matrix()) <= 1e-8);
        // the closed-form distance agrees with the general formula inside the family;
        // compared squared, since the general form cancels near zero before the root
        let d_comm = w2_commuting(&family[0], &exact).unwrap();
        let d_gen = w2_gaussian(&gaussians[0], &e).unwrap();
        let scale = 1.0 + gaussians[0].cov().trace() + e.cov().trace();
        prop_assert!((d_comm.powi(2) - d_gen.powi(2)).abs() <= 1e-10 * scale);
    }
}

#[test]
fn barycenter_of_two_scaled_copies_interpolates_scale() {
    // 1D: barycenter scale is the weighted mean of standard deviations
    let a = GaussianMeasure::new(vec![0.0], SpdMatrix::from_diag(&[1.0])).unwrap();
    let b = GaussianMeasure::new(vec![4.0], SpdMatrix::from_diag(&[9.0])).unwrap();
    let (bar, _) = barycenter_fixed_point(&[a, b], &[0.25, 0.75]).unwrap();
    assert!((bar.mean()[0] - 3.0).abs() < 1e-12);
    assert!((bar.cov().as_matrix()[(0, 0)] - 2.5f64.powi(2)).abs() < 1e-9);
}
