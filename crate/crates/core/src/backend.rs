//! The barycenter/distance pair the bootstrap statistics are built on.
//!
//! A backend fixes how a sample of measures is averaged (optionally with raw
//! multiplier weights) and how two averages are compared. The statistics in
//! [`crate::bootstrap`] and [`crate::changepoint`] only talk to this trait.

use crate::entropic::{
    bregman_with_kernel, self_transport_cost, sinkhorn_with_kernel, weighted_bregman_with_kernel, DiscreteMeasure,
    EntropicConfig, GridKernel,
};
use crate::error::{Error, Result};
use crate::gauss_ot::{
    barycenter_fixed_point, check_commuting_family, normalize_nonnegative, w2_gaussian, weighted_moments,
    CommutingMeasure, CommutingMoments, GaussianMeasure,
};
use crate::scalar::Scalar;

pub trait Backend<T: Scalar>: Sync {
    type Measure: Clone + Send + Sync;
    /// What a barycenter is reduced to for distance computations.
    type Summary: Clone + Send + Sync;

    fn name(&self) -> &'static str;

    /// Whether raw weights may be negative (only the linear commuting average allows it).
    fn supports_signed_weights(&self) -> bool {
        false
    }

    /// Checks that two measures live in the same representation (basis, dimension, grid).
    fn check_compatible(&self, a: &Self::Measure, b: &Self::Measure) -> Result<()>;

    /// Unweighted barycenter.
    fn barycenter(&self, sample: &[Self::Measure]) -> Result<Self::Summary>;

    /// Barycenter with raw multiplier weights, normalized by their sum.
    fn weighted_barycenter(&self, sample: &[Self::Measure], raw_weights: &[T]) -> Result<Self::Summary>;

    fn summarize(&self, measure: &Self::Measure) -> Result<Self::Summary>;

    /// W₂ (or its entropic surrogate) between two summaries.
    fn distance(&self, a: &Self::Summary, b: &Self::Summary) -> Result<T>;
}

fn uniform<T: Scalar>(n: usize) -> Vec<T> {
    vec![T::one() / T::lit(n as f64); n]
}

/// Closed-form commuting family: barycenters are linear averages of `(m, λ)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct CommutingBackend;

impl<T: Scalar> Backend<T> for CommutingBackend {
    type Measure = CommutingMeasure<T>;
    type Summary = CommutingMoments<T>;

    fn name(&self) -> &'static str {
        "commuting"
    }

    fn supports_signed_weights(&self) -> bool {
        true
    }

    fn check_compatible(&self, a: &Self::Measure, b: &Self::Measure) -> Result<()> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch {
                expected: a.dim(),
                found: b.dim(),
            });
        }
        if !a.shares_basis_with(b) {
            return Err(Error::BasisMismatch);
        }
        Ok(())
    }

    fn barycenter(&self, sample: &[Self::Measure]) -> Result<Self::Summary> {
        check_commuting_family(sample)?;
        weighted_moments(sample, &uniform(sample.len()))
    }

    fn weighted_barycenter(&self, sample: &[Self::Measure], raw_weights: &[T]) -> Result<Self::Summary> {
        check_commuting_family(sample)?;
        weighted_moments(sample, raw_weights)
    }

    fn summarize(&self, measure: &Self::Measure) -> Result<Self::Summary> {
        Ok(measure.moments())
    }

    fn distance(&self, a: &Self::Summary, b: &Self::Summary) -> Result<T> {
        if a.mean.len() != b.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: a.mean.len(),
                found: b.mean.len(),
            });
        }
        Ok(a.distance(b))
    }
}

/// General Gaussians: fixed-point barycenter and the Bures–Wasserstein formula.
#[derive(Clone, Copy, Debug, Default)]
pub struct GaussianBackend;

impl<T: Scalar> Backend<T> for GaussianBackend {
    type Measure = GaussianMeasure<T>;
    type Summary = GaussianMeasure<T>;

    fn name(&self) -> &'static str {
        "gaussian"
    }

    fn check_compatible(&self, a: &Self::Measure, b: &Self::Measure) -> Result<()> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch {
                expected: a.dim(),
                found: b.dim(),
            });
        }
        Ok(())
    }

    fn barycenter(&self, sample: &[Self::Measure]) -> Result<Self::Summary> {
        barycenter_fixed_point(sample, &uniform(sample.len())).map(|(g, _)| g)
    }

    fn weighted_barycenter(&self, sample: &[Self::Measure], raw_weights: &[T]) -> Result<Self::Summary> {
        if raw_weights.len() != sample.len() {
            return Err(Error::DimensionMismatch {
                expected: sample.len(),
                found: raw_weights.len(),
            });
        }
        let w = normalize_nonnegative(raw_weights)?;
        barycenter_fixed_point(sample, &w).map(|(g, _)| g)
    }

    fn summarize(&self, measure: &Self::Measure) -> Result<Self::Summary> {
        Ok(measure.clone())
    }

    fn distance(&self, a: &Self::Summary, b: &Self::Summary) -> Result<T> {
        w2_gaussian(a, b)
    }
}

/// Grid measures: Bregman barycenters and `√(Sinkhorn transport cost)`.
///
/// With `debias` the distance is `√(C(a,b) − ½C(a,a) − ½C(b,b))`, which removes
/// the blur bias that makes `C(a,a) > 0`; it costs two extra solves.
#[derive(Clone, Copy, Debug)]
pub struct EntropicBackend<T> {
    pub cfg: EntropicConfig<T>,
    pub debias: bool,
}

impl<T: Scalar> EntropicBackend<T> {
    pub fn new(cfg: EntropicConfig<T>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, debias: false })
    }

    pub fn debiased(cfg: EntropicConfig<T>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, debias: true })
    }

    fn kernel(&self, m: &DiscreteMeasure<T>) -> GridKernel<T> {
        GridKernel::new(m.height(), m.width(), self.cfg.gamma)
    }
}

impl<T: Scalar> Default for EntropicBackend<T> {
    fn default() -> Self {
        Self {
            cfg: EntropicConfig::default(),
            debias: false,
        }
    }
}

/// Barycenter on a grid, with its self-transport cost when the backend debiases.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSummary<T> {
    pub measure: DiscreteMeasure<T>,
    pub self_cost: T,
}

impl<T: Scalar> EntropicBackend<T> {
    fn wrap(&self, kernel: &GridKernel<T>, measure: DiscreteMeasure<T>) -> Result<GridSummary<T>> {
        let self_cost = if self.debias {
            self_transport_cost(kernel, &measure, &self.cfg)?.cost
        } else {
            T::zero()
        };
        Ok(GridSummary { measure, self_cost })
    }
}

impl<T: Scalar> Backend<T> for EntropicBackend<T> {
    type Measure = DiscreteMeasure<T>;
    type Summary = GridSummary<T>;

    fn name(&self) -> &'static str {
        "entropic"
    }

    fn check_compatible(&self, a: &Self::Measure, b: &Self::Measure) -> Result<()> {
        if a.shape() != b.shape() {
            return Err(Error::ShapeMismatch(a.height(), a.width(), b.height(), b.width()));
        }
        Ok(())
    }

    fn barycenter(&self, sample: &[Self::Measure]) -> Result<Self::Summary> {
        let first = sample.first().ok_or(Error::EmptyInput)?;
        let kernel = self.kernel(first);
        let bary = bregman_with_kernel(&kernel, sample, &uniform(sample.len()), &self.cfg)?;
        self.wrap(&kernel, bary)
    }

    fn weighted_barycenter(&self, sample: &[Self::Measure], raw_weights: &[T]) -> Result<Self::Summary> {
        let first = sample.first().ok_or(Error::EmptyInput)?;
        let kernel = self.kernel(first);
        let bary = weighted_bregman_with_kernel(&kernel, sample, raw_weights, &self.cfg)?;
        self.wrap(&kernel, bary)
    }

    fn summarize(&self, measure: &Self::Measure) -> Result<Self::Summary> {
        self.wrap(&self.kernel(measure), measure.clone())
    }

    fn distance(&self, a: &Self::Summary, b: &Self::Summary) -> Result<T> {
        self.check_compatible(&a.measure, &b.measure)?;
        let kernel = self.kernel(&a.measure);
        let cost = sinkhorn_with_kernel(&kernel, &a.measure, &b.measure, &self.cfg)?.cost
            - T::lit(0.5) * (a.self_cost + b.self_cost);
        Ok(cost.max(T::zero()).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Matrix, SpdMatrix};
    use std::sync::Arc;

    fn comm(basis: &Arc<Matrix<f64>>, mean: [f64; 2], lam: [f64; 2]) -> CommutingMeasure<f64> {
        CommutingMeasure::new(Arc::clone(basis), mean.to_vec(), lam.to_vec()).unwrap()
    }

    #[test]
    fn commuting_backend_averages_and_allows_signed_weights() {
        let u = Arc::new(Matrix::identity(2));
        let s = vec![comm(&u, [0.0, 0.0], [1.0, 1.0]), comm(&u, [2.0, 0.0], [3.0, 1.0])];
        let b = CommutingBackend;
        let bar = b.barycenter(&s).unwrap();
        assert_eq!(bar.mean, vec![1.0, 0.0]);
        assert_eq!(bar.sqrt_eigs, vec![2.0, 1.0]);
        let signed = b.weighted_barycenter(&s, &[2.0, -0.5]).unwrap();
        assert!((signed.mean[0] - (-1.0 / 1.5)).abs() < 1e-15);
        assert!(Backend::<f64>::supports_signed_weights(&b));
        assert!(matches!(
            b.weighted_barycenter(&s, &[1.0, -1.0]),
            Err(Error::DegenerateWeights { .. })
        ));
    }

    #[test]
    fn commuting_backend_rejects_foreign_basis() {
        let u = Arc::new(Matrix::identity(2));
        let (sn, cs) = 0.3f64.sin_cos();
        let v = Arc::new(Matrix::from_row_major(2, 2, vec![cs, -sn, sn, cs]).unwrap());
        let b = CommutingBackend;
        let a = comm(&u, [0.0, 0.0], [1.0, 2.0]);
        let c = comm(&v, [0.0, 0.0], [1.0, 2.0]);
        assert!(matches!(b.check_compatible(&a, &c), Err(Error::BasisMismatch)));
        assert!(matches!(b.barycenter(&[a, c]), Err(Error::BasisMismatch)));
    }

    #[test]
    fn gaussian_backend_matches_commuting_on_diagonal_family() {
        let u = Arc::new(Matrix::identity(2));
        let cm = vec![comm(&u, [0.0, 1.0], [1.0, 2.0]), comm(&u, [1.0, 0.0], [3.0, 0.5])];
        let gm: Vec<_> = cm.iter().map(|m| m.to_gaussian()).collect();
        let w = [3.0, 1.0];
        let c = CommutingBackend.weighted_barycenter(&cm, &w).unwrap();
        let g = GaussianBackend.weighted_barycenter(&gm, &w).unwrap();
        let expect = GaussianMeasure::new(
            c.mean.clone(),
            SpdMatrix::from_diag(&[c.sqrt_eigs[0].powi(2), c.sqrt_eigs[1].powi(2)]),
        )
        .unwrap();
        assert!(GaussianBackend.distance(&g, &expect).unwrap() < 1e-7);
        assert!(matches!(
            GaussianBackend.weighted_barycenter(&gm, &[1.0, -1.0]),
            Err(Error::NegativeWeight { .. })
        ));
    }

    #[test]
    fn entropic_distance_is_square_root_of_cost() {
        let a = DiscreteMeasure::<f64>::point_mass(1, 10, 0, 1);
        let b = DiscreteMeasure::point_mass(1, 10, 0, 6);
        let be = EntropicBackend::default();
        let d = be
            .distance(&be.summarize(&a).unwrap(), &be.summarize(&b).unwrap())
            .unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }
}
