//! Closed-form 2-Wasserstein geometry of location-scatter measures.
//!
//! Within one location-scatter family the distance and barycenter depend only on
//! means and covariances, so every family is handled through its Gaussian
//! representative. Families whose covariances share an eigenbasis reduce further
//! to Euclidean operations on `(mean, sqrt-eigenvalue)` pairs.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{inv_sqrtm, project_psd, sqrtm, Matrix, SpdMatrix};
use crate::scalar::Scalar;

/// Relative fixed-point tolerance of [`barycenter_fixed_point`].
pub const FIXED_POINT_TOL: f64 = 1e-10;
/// Iteration budget of [`barycenter_fixed_point`].
pub const FIXED_POINT_MAX_ITERS: usize = 500;
/// Tolerance for "these two bases are the same" and "this covariance is diagonal in U".
pub const BASIS_TOL: f64 = 1e-8;

/// Gaussian (or any location-scatter) measure given by mean and covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMeasure<T> {
    mean: Vec<T>,
    cov: SpdMatrix<T>,
}

impl<T: Scalar> GaussianMeasure<T> {
    pub fn new(mean: Vec<T>, cov: SpdMatrix<T>) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch {
                expected: cov.dim(),
                found: mean.len(),
            });
        }
        Ok(Self { mean, cov })
    }

    pub fn standard(d: usize) -> Self {
        Self {
            mean: vec![T::zero(); d],
            cov: SpdMatrix::identity(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix<T> {
        &self.cov
    }
}

/// Measure in a commuting family: covariance `U diag(λ)² Uᵀ` with a basis shared by the family.
#[derive(Clone, Debug, PartialEq)]
pub struct CommutingMeasure<T> {
    basis: Arc<Matrix<T>>,
    mean: Vec<T>,
    sqrt_eigs: Vec<T>,
}

impl<T: Scalar> CommutingMeasure<T> {
    /// Checks that `basis` is orthonormal, dimensions agree and `sqrt_eigs ≥ 0`.
    pub fn new(basis: Arc<Matrix<T>>, mean: Vec<T>, sqrt_eigs: Vec<T>) -> Result<Self> {
        check_orthonormal(&basis)?;
        let d = basis.rows();
        for len in [mean.len(), sqrt_eigs.len()] {
            if len != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: len,
                });
            }
        }
        if let Some((i, &l)) = sqrt_eigs.iter().enumerate().find(|(_, &l)| !(l >= T::zero())) {
            return Err(Error::InvalidSpec(format!(
                "sqrt eigenvalue {i} is {l}, must be nonnegative"
            )));
        }
        Ok(Self { basis, mean, sqrt_eigs })
    }

    /// Admits a full Gaussian into the commuting family spanned by `basis`.
    ///
    /// Fails with `BasisMismatch` when `UᵀSU` has off-diagonal mass above
    /// `BASIS_TOL` relative to its Frobenius norm.
    pub fn from_gaussian(g: &GaussianMeasure<T>, basis: Arc<Matrix<T>>) -> Result<Self> {
        check_orthonormal(&basis)?;
        if basis.rows() != g.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.rows(),
                found: g.dim(),
            });
        }
        let rotated = &(&basis.transpose() * g.cov.as_matrix()) * basis.as_ref();
        let d = g.dim();
        let off: T = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| rotated[(i, j)] * rotated[(i, j)])
            .sum::<T>()
            .sqrt();
        if off > T::tol(BASIS_TOL, 256.0) * rotated.frobenius_norm().max(T::min_positive_value()) {
            return Err(Error::BasisMismatch);
        }
        let sqrt_eigs = (0..d).map(|i| rotated[(i, i)].max(T::zero()).sqrt()).collect();
        Ok(Self {
            basis,
            mean: g.mean.clone(),
            sqrt_eigs,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn basis(&self) -> &Arc<Matrix<T>> {
        &self.basis
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn sqrt_eigs(&self) -> &[T] {
        &self.sqrt_eigs
    }

    pub fn covariance(&self) -> Matrix<T> {
        let d = self.dim();
        let u = self.basis.as_ref();
        let mut s = Matrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v: T = (0..d)
                    .map(|k| u[(i, k)] * self.sqrt_eigs[k] * self.sqrt_eigs[k] * u[(j, k)])
                    .sum();
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    pub fn to_gaussian(&self) -> GaussianMeasure<T> {
        GaussianMeasure {
            mean: self.mean.clone(),
            cov: SpdMatrix::from_trusted(self.covariance()),
        }
    }

    pub fn moments(&self) -> CommutingMoments<T> {
        CommutingMoments {
            mean: self.mean.clone(),
            sqrt_eigs: self.sqrt_eigs.clone(),
        }
    }

    pub fn shares_basis_with(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.basis, &other.basis)
            || (self.basis.rows() == other.basis.rows()
                && self.basis.max_abs_diff(&other.basis) <= T::tol(BASIS_TOL, 256.0))
    }
}

/// Coordinates of a commuting-family element: mean and sqrt-eigenvalues in the shared basis.
///
/// Unlike [`CommutingMeasure`] the sqrt-eigenvalues may be negative; signed
/// bootstrap weights produce such points and only their differences are used.
#[derive(Clone, Debug, PartialEq)]
pub struct CommutingMoments<T> {
    pub mean: Vec<T>,
    pub sqrt_eigs: Vec<T>,
}

impl<T: Scalar> CommutingMoments<T> {
    pub fn distance(&self, other: &Self) -> T {
        (sq_dist(&self.mean, &other.mean) + sq_dist(&self.sqrt_eigs, &other.sqrt_eigs)).sqrt()
    }
}

fn check_orthonormal<T: Scalar>(u: &Matrix<T>) -> Result<()> {
    if !u.is_square() {
        return Err(Error::DimensionMismatch {
            expected: u.rows(),
            found: u.cols(),
        });
    }
    let dev = (&u.transpose() * u).max_abs_diff(&Matrix::identity(u.rows()));
    if dev > T::tol(1e-10, 64.0) {
        return Err(Error::NonOrthonormalBasis(dev.as_f64()));
    }
    Ok(())
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn check_dims<T: Scalar>(a: &GaussianMeasure<T>, b: &GaussianMeasure<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// `√(‖m₁−m₂‖² + tr(S₁ + S₂ − 2(S₁^{1/2} S₂ S₁^{1/2})^{1/2}))`.
pub fn w2_gaussian<T: Scalar>(a: &GaussianMeasure<T>, b: &GaussianMeasure<T>) -> Result<T> {
    check_dims(a, b)?;
    let s1 = a.cov.as_matrix();
    let s2 = b.cov.as_matrix();
    let root1 = sqrtm(s1)?;
    let cross = (&(root1.as_matrix() * s2) * root1.as_matrix()).symmetrize();
    let cross_root = sqrtm(&cross)?;
    let bures = (s1.trace() + s2.trace() - T::lit(2.0) * cross_root.trace()).max(T::zero());
    Ok((sq_dist(&a.mean, &b.mean) + bures).sqrt())
}

/// Symmetric matrix of the linear optimal map from `N(0, S₁)` to `N(0, S₂)`:
/// `S₁^{−1/2} (S₁^{1/2} S₂ S₁^{1/2})^{1/2} S₁^{−1/2}`.
pub fn optimal_map<T: Scalar>(a: &GaussianMeasure<T>, b: &GaussianMeasure<T>) -> Result<SpdMatrix<T>> {
    check_dims(a, b)?;
    let s1 = a.cov.as_matrix();
    let inv_root = inv_sqrtm(s1)?;
    let root = sqrtm(s1)?;
    let cross = (&(root.as_matrix() * b.cov.as_matrix()) * root.as_matrix()).symmetrize();
    let middle = sqrtm(&cross)?;
    let map = &(inv_root.as_matrix() * middle.as_matrix()) * inv_root.as_matrix();
    project_psd(&map.symmetrize())
}

/// Same distance as [`w2_gaussian`], computed as `√(‖m₁−m₂‖² + ‖(A − I) S₁^{1/2}‖²_F)`.
pub fn w2_frobenius_form<T: Scalar>(a: &GaussianMeasure<T>, b: &GaussianMeasure<T>) -> Result<T> {
    let map = optimal_map(a, b)?;
    let d = a.dim();
    let shifted = map.as_matrix().sub(&Matrix::identity(d));
    let root = sqrtm(a.cov.as_matrix())?;
    let f = (&shifted * root.as_matrix()).frobenius_norm();
    Ok((sq_dist(&a.mean, &b.mean) + f * f).sqrt())
}

/// Outcome of the fixed-point barycenter solve.
#[derive(Clone, Debug, PartialEq)]
pub struct BarycenterSolveReport {
    pub iterations: usize,
    /// `‖Q − Σ wᵢ (Q^{1/2} Sᵢ Q^{1/2})^{1/2}‖_F` at the returned `Q`.
    pub residual: f64,
    pub converged: bool,
}

/// Checks that `weights` lies on the unit simplex and matches `n`.
pub(crate) fn check_simplex<T: Scalar>(weights: &[T], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: weights.len(),
        });
    }
    if let Some((index, &w)) = weights.iter().enumerate().find(|(_, &w)| !(w >= T::zero())) {
        return Err(Error::NegativeWeight {
            index,
            value: w.as_f64(),
        });
    }
    let total: T = weights.iter().copied().sum();
    if (total - T::one()).abs() > T::tol(1e-9, 64.0 * n as f64) {
        return Err(Error::InvalidWeights(format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// Normalizes nonnegative raw weights to the simplex.
pub(crate) fn normalize_nonnegative<T: Scalar>(raw: &[T]) -> Result<Vec<T>> {
    if let Some((index, &w)) = raw.iter().enumerate().find(|(_, &w)| !(w >= T::zero())) {
        return Err(Error::NegativeWeight {
            index,
            value: w.as_f64(),
        });
    }
    let total: T = raw.iter().copied().sum();
    if total <= T::zero() {
        return Err(Error::AllZeroWeights);
    }
    Ok(raw.iter().map(|&w| w / total).collect())
}

fn fixed_point_map<T: Scalar>(q: &Matrix<T>, covs: &[&Matrix<T>], weights: &[T]) -> Result<Matrix<T>> {
    let root = sqrtm(q)?;
    let d = q.rows();
    let mut next = Matrix::zeros(d, d);
    for (s, &w) in covs.iter().zip(weights) {
        if w == T::zero() {
            continue;
        }
        let inner = (&(root.as_matrix() * s) * root.as_matrix()).symmetrize();
        next.add_scaled_assign(w, sqrtm(&inner)?.as_matrix());
    }
    Ok(next.symmetrize())
}

/// Weighted barycenter of Gaussians by Picard iteration on the covariance fixed point
/// `Q = Σ wᵢ (Q^{1/2} Sᵢ Q^{1/2})^{1/2}`, started at `Σ wᵢ Sᵢ`.
///
/// Stops once the residual falls below `1e-10 · tr(Q)`. When the iteration budget
/// runs out, `Error::FixedPointNoConvergence` carries the final report.
pub fn barycenter_fixed_point<T: Scalar>(
    measures: &[GaussianMeasure<T>],
    weights: &[T],
) -> Result<(GaussianMeasure<T>, BarycenterSolveReport)> {
    let first = measures.first().ok_or(Error::EmptyInput)?;
    let d = first.dim();
    for m in measures {
        check_dims(first, m)?;
    }
    check_simplex(weights, measures.len())?;

    let mut mean = vec![T::zero(); d];
    for (m, &w) in measures.iter().zip(weights) {
        for (acc, &x) in mean.iter_mut().zip(&m.mean) {
            *acc += w * x;
        }
    }

    let covs: Vec<&Matrix<T>> = measures.iter().map(|m| m.cov.as_matrix()).collect();
    let mut q = Matrix::zeros(d, d);
    for (s, &w) in covs.iter().zip(weights) {
        q.add_scaled_assign(w, s);
    }
    let q0 = q.symmetrize();
    q = q0;

    let tol = T::tol(FIXED_POINT_TOL, 1024.0);
    let mut report = BarycenterSolveReport {
        iterations: 0,
        residual: f64::INFINITY,
        converged: false,
    };
    for it in 0..=FIXED_POINT_MAX_ITERS {
        let next = fixed_point_map(&q, &covs, weights)?;
        let residual = q.sub(&next).frobenius_norm();
        report.iterations = it;
        report.residual = residual.as_f64();
        if residual <= tol * q.trace().abs() {
            report.converged = true;
            let cov = project_psd(&q)?;
            return Ok((GaussianMeasure { mean, cov }, report));
        }
        if it == FIXED_POINT_MAX_ITERS {
            break;
        }
        q = next;
    }
    Err(Error::FixedPointNoConvergence(report))
}

fn check_family<T: Scalar>(measures: &[CommutingMeasure<T>]) -> Result<&CommutingMeasure<T>> {
    let first = measures.first().ok_or(Error::EmptyInput)?;
    for m in measures {
        if m.dim() != first.dim() {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                found: m.dim(),
            });
        }
        if !first.shares_basis_with(m) {
            return Err(Error::BasisMismatch);
        }
    }
    Ok(first)
}

/// `√(‖m₁−m₂‖² + ‖λ₁−λ₂‖²)` for measures sharing an eigenbasis.
pub fn w2_commuting<T: Scalar>(a: &CommutingMeasure<T>, b: &CommutingMeasure<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    if !a.shares_basis_with(b) {
        return Err(Error::BasisMismatch);
    }
    Ok((sq_dist(&a.mean, &b.mean) + sq_dist(&a.sqrt_eigs, &b.sqrt_eigs)).sqrt())
}

/// Weighted average of means and sqrt-eigenvalues for arbitrary (possibly signed)
/// raw weights, normalized by their sum. The caller guarantees a shared basis.
pub(crate) fn weighted_moments<T: Scalar>(
    measures: &[CommutingMeasure<T>],
    raw_weights: &[T],
) -> Result<CommutingMoments<T>> {
    let first = measures.first().ok_or(Error::EmptyInput)?;
    if raw_weights.len() != measures.len() {
        return Err(Error::DimensionMismatch {
            expected: measures.len(),
            found: raw_weights.len(),
        });
    }
    let total: T = raw_weights.iter().copied().sum();
    if total == T::zero() || !total.is_finite() {
        return Err(Error::DegenerateWeights { attempts: 0 });
    }
    let d = first.dim();
    let mut mean = vec![T::zero(); d];
    let mut sqrt_eigs = vec![T::zero(); d];
    for (m, &w) in measures.iter().zip(raw_weights) {
        for k in 0..d {
            mean[k] += w * m.mean[k];
            sqrt_eigs[k] += w * m.sqrt_eigs[k];
        }
    }
    for k in 0..d {
        mean[k] /= total;
        sqrt_eigs[k] /= total;
    }
    Ok(CommutingMoments { mean, sqrt_eigs })
}

/// Barycenter of a commuting family: `(Σ wᵢ mᵢ, Σ wᵢ λᵢ)` in the shared basis.
pub fn barycenter_commuting<T: Scalar>(measures: &[CommutingMeasure<T>], weights: &[T]) -> Result<CommutingMeasure<T>> {
    let first = check_family(measures)?;
    check_simplex(weights, measures.len())?;
    let m = weighted_moments(measures, weights)?;
    Ok(CommutingMeasure {
        basis: Arc::clone(&first.basis),
        mean: m.mean,
        sqrt_eigs: m.sqrt_eigs.into_iter().map(|l| l.max(T::zero())).collect(),
    })
}

pub(crate) fn check_commuting_family<T: Scalar>(measures: &[CommutingMeasure<T>]) -> Result<()> {
    check_family(measures).map(|_| ())
}
