//! Dense symmetric matrix primitives: eigendecomposition, square roots, PSD projection.
//!
//! Dimensions in this crate are small (covariances of a few dimensions), so the
//! eigensolver is a cyclic Jacobi iteration. It converges quadratically for
//! symmetric input and keeps the eigenvector basis orthonormal to working precision.

use std::ops::{Index, IndexMut, Mul};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_JACOBI_SWEEPS: usize = 100;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.cols.max(1)).map(<[T]>::to_vec).collect()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn scale(&self, c: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    /// `self += c * other`.
    pub fn add_scaled_assign(&mut self, c: T, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "matrix shape mismatch"
        );
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// `(M + Mᵀ) / 2`.
    pub fn symmetrize(&self) -> Self {
        let half = T::lit(0.5);
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = (self[(i, j)] + self[(j, i)]) * half;
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len());
        self.data
            .chunks(self.cols.max(1))
            .map(|row| row.iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// Checks `|m_ij − m_ji| ≤ tol · max(1, |m_ij|)` for all pairs.
    pub fn check_symmetric(&self) -> Result<()> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: self.cols,
            });
        }
        let tol = T::tol(1e-12, 16.0);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let a = self[(i, j)];
                let gap = (a - self[(j, i)]).abs();
                if !(gap <= tol * a.abs().max(T::one())) {
                    return Err(Error::NonSymmetric {
                        row: i,
                        col: j,
                        gap: gap.as_f64(),
                    });
                }
            }
        }
        Ok(())
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: Scalar> Mul for &Matrix<T> {
    type Output = Matrix<T>;

    fn mul(self, rhs: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

/// Symmetric matrix whose spectrum is nonnegative up to `psd_tol`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix<T>(Matrix<T>);

impl<T: Scalar> SpdMatrix<T> {
    /// Validates symmetry and that no eigenvalue is below `−psd_tol`.
    pub fn new(m: Matrix<T>) -> Result<Self> {
        let eig = sym_eig(&m)?;
        check_psd(&eig.values)?;
        Ok(Self(m))
    }

    pub fn identity(d: usize) -> Self {
        Self(Matrix::identity(d))
    }

    /// Diagonal matrix; panics on negative entries.
    pub fn from_diag(diag: &[T]) -> Self {
        assert!(diag.iter().all(|&x| x >= T::zero()), "negative diagonal");
        Self(Matrix::from_diag(diag))
    }

    pub(crate) fn from_trusted(m: Matrix<T>) -> Self {
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn as_matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }

    pub fn trace(&self) -> T {
        self.0.trace()
    }

    pub fn sqrtm(&self) -> Result<SpdMatrix<T>> {
        sqrtm(&self.0)
    }

    pub fn inv_sqrtm(&self) -> Result<SpdMatrix<T>> {
        inv_sqrtm(&self.0)
    }
}

/// Eigenpairs of a symmetric matrix: values in descending order, vectors as columns.
#[derive(Clone, Debug)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

impl<T: Scalar> SymEigen<T> {
    /// `V diag(f(w)) Vᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        let n = self.values.len();
        let mapped: Vec<T> = self.values.iter().map(|&w| f(w)).collect();
        let v = &self.vectors;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let s: T = (0..n).map(|k| v[(i, k)] * mapped[k] * v[(j, k)]).sum();
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Eigenvectors follow the sign convention that the first non-negligible
/// component of each column is nonnegative.
pub fn sym_eig<T: Scalar>(m: &Matrix<T>) -> Result<SymEigen<T>> {
    m.check_symmetric()?;
    let n = m.rows();
    let mut a = m.symmetrize();
    let mut v = Matrix::identity(n);
    let eps = T::epsilon();

    let mut converged = false;
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut off = T::zero();
        let mut total = T::zero();
        for i in 0..n {
            for j in 0..n {
                let x = a[(i, j)] * a[(i, j)];
                total += x;
                if i != j {
                    off += x;
                }
            }
        }
        if off <= eps * eps * total || off == T::zero() {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                let t = if theta.abs() > T::lit(1e100).min(T::max_value().sqrt()) {
                    T::lit(0.5) / theta
                } else {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "Jacobi eigensolver",
            iterations: MAX_JACOBI_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap_or(std::cmp::Ordering::Equal));
    let values: Vec<T> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    let sign_tol = eps * T::lit(64.0);
    for (col, &src) in order.iter().enumerate() {
        let first = (0..n)
            .map(|i| v[(i, src)])
            .find(|x| x.abs() > sign_tol)
            .unwrap_or(T::one());
        let flip = if first < T::zero() { -T::one() } else { T::one() };
        for i in 0..n {
            vectors[(i, col)] = flip * v[(i, src)];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Tolerance below zero accepted as round-off: `1e-10 · max|λ|`.
fn psd_tol<T: Scalar>(values: &[T]) -> T {
    let scale = values.iter().fold(T::zero(), |m, &w| m.max(w.abs()));
    T::tol(1e-10, 64.0) * scale
}

fn check_psd<T: Scalar>(values: &[T]) -> Result<()> {
    let tol = psd_tol(values);
    let min = values.iter().copied().fold(T::infinity(), T::min);
    if values.is_empty() || min >= -tol {
        Ok(())
    } else {
        Err(Error::IndefiniteInput {
            min_eig: min.as_f64(),
            tol: tol.as_f64(),
        })
    }
}

/// Principal square root of a PSD matrix. Eigenvalues in `[−psd_tol, 0)` are clamped.
pub fn sqrtm<T: Scalar>(m: &Matrix<T>) -> Result<SpdMatrix<T>> {
    let eig = sym_eig(m)?;
    check_psd(&eig.values)?;
    Ok(SpdMatrix(eig.map_spectrum(|w| w.max(T::zero()).sqrt())))
}

/// Inverse principal square root; requires `λ_min ≥ 1e-12 · tr(m)/d`.
pub fn inv_sqrtm<T: Scalar>(m: &Matrix<T>) -> Result<SpdMatrix<T>> {
    let eig = sym_eig(m)?;
    let n = eig.values.len();
    let floor = if n == 0 {
        T::zero()
    } else {
        T::tol(1e-12, 16.0) * m.trace() / T::lit(n as f64)
    };
    let min = eig.values.iter().copied().fold(T::infinity(), T::min);
    if n > 0 && !(min >= floor && min > T::zero()) {
        return Err(Error::SingularInput {
            min_eig: min.as_f64(),
            floor: floor.as_f64(),
        });
    }
    Ok(SpdMatrix(eig.map_spectrum(|w| T::one() / w.sqrt())))
}

/// Nearest PSD matrix in Frobenius norm: negative eigenvalues set to zero.
pub fn project_psd<T: Scalar>(m: &Matrix<T>) -> Result<SpdMatrix<T>> {
    let eig = sym_eig(m)?;
    Ok(SpdMatrix(eig.map_spectrum(|w| w.max(T::zero()))))
}
