//! Entropic optimal transport and Bregman-projection barycenters on regular 2D grids.
//!
//! Pixel `(r, c)` of an `H × W` grid sits at `((r + ½)/H, (c + ½)/W)` in the unit
//! square and the ground cost is the squared Euclidean distance. That cost splits
//! into a row part and a column part, so the Gibbs kernel `exp(−C/γ)` is a
//! Kronecker product and is applied as two 1D passes.
//!
//! Both solvers start with plain scaling iterations and restart in the log
//! domain once a scaling factor leaves `[1e-30, 1e30]`.

use crate::error::{Error, Result};
use crate::gauss_ot::check_simplex;
use crate::scalar::Scalar;

/// Weights below this are dropped from the support.
pub const SUPPORT_FLOOR: f64 = 1e-12;
const SCALING_MAX: f64 = 1e30;
const SCALING_MIN: f64 = 1e-30;

/// Probability measure on the pixels of an `H × W` grid (row-major weights).
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure<T> {
    height: usize,
    width: usize,
    weights: Vec<T>,
}

impl<T: Scalar> DiscreteMeasure<T> {
    /// Takes already-normalized weights; entries below `SUPPORT_FLOOR` are truncated.
    pub fn new(height: usize, width: usize, weights: Vec<T>) -> Result<Self> {
        check_len(height, width, weights.len())?;
        if let Some((index, &w)) = weights.iter().enumerate().find(|(_, &w)| !(w >= T::zero())) {
            return Err(Error::NegativeWeight {
                index,
                value: w.as_f64(),
            });
        }
        let total: T = weights.iter().copied().sum();
        if (total - T::one()).abs() > T::tol(1e-9, 4.0 * weights.len() as f64) {
            return Err(Error::NotNormalized(total.as_f64()));
        }
        Self::from_intensities(height, width, weights)
    }

    /// Normalizes nonnegative intensities to unit mass.
    pub fn from_intensities(height: usize, width: usize, mut values: Vec<T>) -> Result<Self> {
        check_len(height, width, values.len())?;
        if let Some((index, &w)) = values.iter().enumerate().find(|(_, &w)| !(w >= T::zero())) {
            return Err(Error::NegativeWeight {
                index,
                value: w.as_f64(),
            });
        }
        for _ in 0..2 {
            let total: T = values.iter().copied().sum();
            if !(total > T::zero()) || !total.is_finite() {
                return Err(Error::ZeroMass);
            }
            let floor = T::lit(SUPPORT_FLOOR);
            for v in values.iter_mut() {
                *v /= total;
                if *v < floor {
                    *v = T::zero();
                }
            }
        }
        Ok(Self {
            height,
            width,
            weights: values,
        })
    }

    pub fn uniform(height: usize, width: usize) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            weights: vec![T::one() / T::lit(n as f64); n],
        }
    }

    pub fn point_mass(height: usize, width: usize, row: usize, col: usize) -> Self {
        let mut weights = vec![T::zero(); height * width];
        weights[row * width + col] = T::one();
        Self { height, width, weights }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn l1_distance(&self, other: &Self) -> T {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(&a, &b)| (a - b).abs())
            .sum()
    }

    /// Center of mass in unit-square coordinates, as `(row, col)`.
    pub fn mean_position(&self) -> (T, T) {
        let mut r = T::zero();
        let mut c = T::zero();
        for (idx, &w) in self.weights.iter().enumerate() {
            let (y, x) = grid_point::<T>(self.height, self.width, idx);
            r += w * y;
            c += w * x;
        }
        (r, c)
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(self.height, self.width, other.height, other.width));
        }
        Ok(())
    }
}

fn check_len(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::EmptyInput);
    }
    if len != height * width {
        return Err(Error::DimensionMismatch {
            expected: height * width,
            found: len,
        });
    }
    Ok(())
}

/// Unit-square coordinates `(row, col)` of pixel `idx`.
pub fn grid_point<T: Scalar>(height: usize, width: usize, idx: usize) -> (T, T) {
    let (r, c) = (idx / width, idx % width);
    (
        (T::lit(r as f64) + T::lit(0.5)) / T::lit(height as f64),
        (T::lit(c as f64) + T::lit(0.5)) / T::lit(width as f64),
    )
}

/// Regularization and stopping rule of the entropic solvers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropicConfig<T> {
    pub gamma: T,
    pub max_iters: usize,
    /// Stopping threshold in L1 (marginal violation for Sinkhorn, iterate change for barycenters).
    pub tol: T,
}

impl<T: Scalar> EntropicConfig<T> {
    pub fn new(gamma: T, max_iters: usize, tol: T) -> Result<Self> {
        let cfg = Self { gamma, max_iters, tol };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > T::zero()) || !self.gamma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

impl<T: Scalar> Default for EntropicConfig<T> {
    fn default() -> Self {
        Self {
            gamma: T::lit(0.005),
            max_iters: 5000,
            tol: T::lit(1e-6),
        }
    }
}

/// 1D factor of a separable operator: a dense `n × n` matrix, row-major.
#[derive(Clone, Debug)]
struct Factor<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> Factor<T> {
    fn build(n: usize, f: impl Fn(T) -> T) -> Self {
        let scale = T::lit(n as f64);
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for k in 0..n {
                let d = T::lit(i as f64 - k as f64) / scale;
                data.push(f(d * d));
            }
        }
        Self { n, data }
    }

    #[inline]
    fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Gibbs kernel of the squared-Euclidean grid cost, in product and log form.
#[derive(Clone, Debug)]
pub struct GridKernel<T> {
    height: usize,
    width: usize,
    kr: Factor<T>,
    kc: Factor<T>,
    // kernel ⊙ 1D cost, for the transport-cost evaluation
    kcr: Factor<T>,
    kcc: Factor<T>,
    log_kr: Factor<T>,
    log_kc: Factor<T>,
    log_kcr: Factor<T>,
    log_kcc: Factor<T>,
}

impl<T: Scalar> GridKernel<T> {
    pub fn new(height: usize, width: usize, gamma: T) -> Self {
        let gibbs = |c: T| (-c / gamma).exp();
        let log_gibbs = |c: T| -c / gamma;
        let log_cost_gibbs = |c: T| c.ln() - c / gamma;
        Self {
            height,
            width,
            kr: Factor::build(height, gibbs),
            kc: Factor::build(width, gibbs),
            kcr: Factor::build(height, |c| c * gibbs(c)),
            kcc: Factor::build(width, |c| c * gibbs(c)),
            log_kr: Factor::build(height, log_gibbs),
            log_kc: Factor::build(width, log_gibbs),
            log_kcr: Factor::build(height, log_cost_gibbs),
            log_kcc: Factor::build(width, log_cost_gibbs),
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `out = (Kr ⊗ Kc) v`.
    pub fn apply(&self, v: &[T], out: &mut [T]) {
        apply_sep(&self.kr, &self.kc, v, out);
    }

    /// `out = log((Kr ⊗ Kc) exp(lv))`, stable for arbitrary `lv` (including `−∞`).
    pub fn apply_log(&self, lv: &[T], out: &mut [T]) {
        lse_sep(&self.log_kr, &self.log_kc, lv, out);
    }

    /// `Σᵢⱼ uᵢ Kᵢⱼ Cᵢⱼ vⱼ` using `K ⊙ C = (Kr⊙Cr) ⊗ Kc + Kr ⊗ (Kc⊙Cc)`.
    fn transport_cost(&self, u: &[T], v: &[T]) -> T {
        let n = self.len();
        let mut t1 = vec![T::zero(); n];
        let mut t2 = vec![T::zero(); n];
        apply_sep(&self.kcr, &self.kc, v, &mut t1);
        apply_sep(&self.kr, &self.kcc, v, &mut t2);
        (0..n).map(|i| u[i] * (t1[i] + t2[i])).sum()
    }

    fn transport_cost_log(&self, f: &[T], g: &[T]) -> T {
        let n = self.len();
        let mut t1 = vec![T::zero(); n];
        let mut t2 = vec![T::zero(); n];
        lse_sep(&self.log_kcr, &self.log_kc, g, &mut t1);
        lse_sep(&self.log_kr, &self.log_kcc, g, &mut t2);
        (0..n)
            .filter(|&i| f[i] > T::neg_infinity())
            .map(|i| (f[i] + t1[i]).exp() + (f[i] + t2[i]).exp())
            .sum()
    }
}

fn apply_sep<T: Scalar>(rows: &Factor<T>, cols: &Factor<T>, v: &[T], out: &mut [T]) {
    let (h, w) = (rows.n, cols.n);
    let mut tmp = vec![T::zero(); h * w];
    for k in 0..h {
        let vk = &v[k * w..(k + 1) * w];
        let tk = &mut tmp[k * w..(k + 1) * w];
        for (c, t) in tk.iter_mut().enumerate() {
            *t = cols.row(c).iter().zip(vk).map(|(&a, &b)| a * b).sum();
        }
    }
    for r in 0..h {
        let or = &mut out[r * w..(r + 1) * w];
        or.iter_mut().for_each(|x| *x = T::zero());
        for (k, &a) in rows.row(r).iter().enumerate() {
            if a == T::zero() {
                continue;
            }
            for (o, &t) in or.iter_mut().zip(&tmp[k * w..(k + 1) * w]) {
                *o += a * t;
            }
        }
    }
}

#[inline]
fn log_sum_exp<T: Scalar>(terms: impl Iterator<Item = T> + Clone) -> T {
    let max = terms.clone().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() || !max.is_finite() {
        return max;
    }
    max + terms.map(|x| (x - max).exp()).sum::<T>().ln()
}

fn lse_sep<T: Scalar>(rows: &Factor<T>, cols: &Factor<T>, lv: &[T], out: &mut [T]) {
    let (h, w) = (rows.n, cols.n);
    // stored column-major so the second pass reads contiguous memory
    let mut tmp = vec![T::zero(); h * w];
    for k in 0..h {
        let vk = &lv[k * w..(k + 1) * w];
        for c in 0..w {
            tmp[c * h + k] = log_sum_exp(cols.row(c).iter().zip(vk).map(|(&a, &b)| a + b));
        }
    }
    for r in 0..h {
        let kr = rows.row(r);
        for c in 0..w {
            let tc = &tmp[c * h..(c + 1) * h];
            out[r * w + c] = log_sum_exp(kr.iter().zip(tc).map(|(&a, &b)| a + b));
        }
    }
}

fn scaling_unstable<T: Scalar>(scaling: &[T], support: &[T]) -> bool {
    let (lo, hi) = (T::lit(SCALING_MIN), T::lit(SCALING_MAX));
    scaling
        .iter()
        .zip(support)
        .any(|(&s, &m)| m > T::zero() && !(s >= lo && s <= hi))
}

/// Outcome of a Sinkhorn solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornReport<T> {
    /// `Σ πᵢⱼ ‖xᵢ − yⱼ‖²` for the entropic plan, without the entropy term.
    pub cost: T,
    /// L1 violation of the first marginal; the second is matched exactly.
    pub marginal_err: T,
    pub iterations: usize,
    pub log_domain: bool,
}

/// Entropic transport cost between two grid measures: returns `(cost, marginal_err)`.
pub fn sinkhorn_w2<T: Scalar>(
    a: &DiscreteMeasure<T>,
    b: &DiscreteMeasure<T>,
    cfg: &EntropicConfig<T>,
) -> Result<(T, T)> {
    let kernel = GridKernel::new(a.height, a.width, cfg.gamma);
    sinkhorn_with_kernel(&kernel, a, b, cfg).map(|r| (r.cost, r.marginal_err))
}

/// [`sinkhorn_w2`] with a prebuilt kernel and the full report.
pub fn sinkhorn_with_kernel<T: Scalar>(
    kernel: &GridKernel<T>,
    a: &DiscreteMeasure<T>,
    b: &DiscreteMeasure<T>,
    cfg: &EntropicConfig<T>,
) -> Result<SinkhornReport<T>> {
    a.check_shape(b)?;
    cfg.validate()?;
    if kernel.height != a.height || kernel.width != a.width {
        return Err(Error::ShapeMismatch(kernel.height, kernel.width, a.height, a.width));
    }
    match sinkhorn_scaling(kernel, &a.weights, &b.weights, cfg) {
        Some(result) => result,
        None => sinkhorn_log(kernel, &a.weights, &b.weights, cfg),
    }
}

fn divide_on_support<T: Scalar>(mass: &[T], denom: &[T], out: &mut [T]) {
    for ((o, &m), &d) in out.iter_mut().zip(mass).zip(denom) {
        *o = if m > T::zero() { m / d } else { T::zero() };
    }
}

/// Plain scaling iterations; `None` when the scalings leave the safe range.
fn sinkhorn_scaling<T: Scalar>(
    kernel: &GridKernel<T>,
    a: &[T],
    b: &[T],
    cfg: &EntropicConfig<T>,
) -> Option<Result<SinkhornReport<T>>> {
    let n = a.len();
    let mut u: Vec<T> = a
        .iter()
        .map(|&x| if x > T::zero() { T::one() } else { T::zero() })
        .collect();
    let mut v: Vec<T> = b
        .iter()
        .map(|&x| if x > T::zero() { T::one() } else { T::zero() })
        .collect();
    let mut kv = vec![T::zero(); n];
    let mut ktu = vec![T::zero(); n];
    let mut err = T::infinity();
    for it in 0..cfg.max_iters {
        kernel.apply(&v, &mut kv);
        err = (0..n).map(|i| (u[i] * kv[i] - a[i]).abs()).sum();
        if it > 0 && err <= cfg.tol {
            return Some(Ok(SinkhornReport {
                cost: kernel.transport_cost(&u, &v),
                marginal_err: err,
                iterations: it,
                log_domain: false,
            }));
        }
        divide_on_support(a, &kv, &mut u);
        kernel.apply(&u, &mut ktu);
        divide_on_support(b, &ktu, &mut v);
        if scaling_unstable(&u, a) || scaling_unstable(&v, b) {
            return None;
        }
    }
    Some(Err(Error::SinkhornNoConvergence {
        iterations: cfg.max_iters,
        cost: kernel.transport_cost(&u, &v).as_f64(),
        marginal_err: err.as_f64(),
    }))
}

fn log_support<T: Scalar>(m: &[T]) -> Vec<T> {
    m.iter()
        .map(|&x| if x > T::zero() { x.ln() } else { T::neg_infinity() })
        .collect()
}

fn sinkhorn_log<T: Scalar>(
    kernel: &GridKernel<T>,
    a: &[T],
    b: &[T],
    cfg: &EntropicConfig<T>,
) -> Result<SinkhornReport<T>> {
    let n = a.len();
    let log_a = log_support(a);
    let log_b = log_support(b);
    let mut f: Vec<T> = log_a
        .iter()
        .map(|&x| if x > T::neg_infinity() { T::zero() } else { x })
        .collect();
    let mut g: Vec<T> = log_b
        .iter()
        .map(|&x| if x > T::neg_infinity() { T::zero() } else { x })
        .collect();
    let mut lkv = vec![T::zero(); n];
    let mut lktu = vec![T::zero(); n];
    let mut err = T::infinity();
    for it in 0..cfg.max_iters {
        kernel.apply_log(&g, &mut lkv);
        err = (0..n)
            .map(|i| {
                let row = if f[i] > T::neg_infinity() {
                    (f[i] + lkv[i]).exp()
                } else {
                    T::zero()
                };
                (row - a[i]).abs()
            })
            .sum();
        if it > 0 && err <= cfg.tol {
            return Ok(SinkhornReport {
                cost: kernel.transport_cost_log(&f, &g),
                marginal_err: err,
                iterations: it,
                log_domain: true,
            });
        }
        for i in 0..n {
            f[i] = log_a[i] - lkv[i];
        }
        kernel.apply_log(&f, &mut lktu);
        for j in 0..n {
            g[j] = log_b[j] - lktu[j];
        }
    }
    Err(Error::SinkhornNoConvergence {
        iterations: cfg.max_iters,
        cost: kernel.transport_cost_log(&f, &g).as_f64(),
        marginal_err: err.as_f64(),
    })
}

/// Transport cost of the entropic plan from `a` to itself.
///
/// Uses the symmetric fixed point `u = a / (K u)` with geometric averaging
/// (`u ← √(u · a / K u)`), which converges far faster than alternating updates
/// when `a` is sharper than the kernel.
pub fn self_transport_cost<T: Scalar>(
    kernel: &GridKernel<T>,
    a: &DiscreteMeasure<T>,
    cfg: &EntropicConfig<T>,
) -> Result<SinkhornReport<T>> {
    cfg.validate()?;
    if kernel.height != a.height || kernel.width != a.width {
        return Err(Error::ShapeMismatch(kernel.height, kernel.width, a.height, a.width));
    }
    let w = &a.weights;
    let n = w.len();
    let mut u: Vec<T> = w
        .iter()
        .map(|&x| if x > T::zero() { T::one() } else { T::zero() })
        .collect();
    let mut ku = vec![T::zero(); n];
    let mut stable = true;
    for it in 0..cfg.max_iters {
        kernel.apply(&u, &mut ku);
        let err: T = (0..n).map(|i| (u[i] * ku[i] - w[i]).abs()).sum();
        if err <= cfg.tol {
            return Ok(SinkhornReport {
                cost: kernel.transport_cost(&u, &u),
                marginal_err: err,
                iterations: it,
                log_domain: false,
            });
        }
        for i in 0..n {
            if w[i] > T::zero() {
                u[i] = (u[i] * w[i] / ku[i]).sqrt();
            }
        }
        if scaling_unstable(&u, w) {
            stable = false;
            break;
        }
    }
    if stable {
        return Err(Error::SinkhornNoConvergence {
            iterations: cfg.max_iters,
            cost: kernel.transport_cost(&u, &u).as_f64(),
            marginal_err: f64::NAN,
        });
    }
    let log_w = log_support(w);
    let mut f: Vec<T> = log_w
        .iter()
        .map(|&x| if x > T::neg_infinity() { T::zero() } else { x })
        .collect();
    let mut lku = vec![T::zero(); n];
    let half = T::lit(0.5);
    let mut err = T::infinity();
    for it in 0..cfg.max_iters {
        kernel.apply_log(&f, &mut lku);
        err = (0..n)
            .map(|i| {
                let m = if f[i] > T::neg_infinity() {
                    (f[i] + lku[i]).exp()
                } else {
                    T::zero()
                };
                (m - w[i]).abs()
            })
            .sum();
        if err <= cfg.tol {
            return Ok(SinkhornReport {
                cost: kernel.transport_cost_log(&f, &f),
                marginal_err: err,
                iterations: it,
                log_domain: true,
            });
        }
        for i in 0..n {
            if log_w[i] > T::neg_infinity() {
                f[i] = half * (f[i] + log_w[i] - lku[i]);
            }
        }
    }
    Err(Error::SinkhornNoConvergence {
        iterations: cfg.max_iters,
        cost: kernel.transport_cost_log(&f, &f).as_f64(),
        marginal_err: err.as_f64(),
    })
}

/// Entropic barycenter by iterative Bregman projections, weights on the simplex.
///
/// Returns the normalized barycenter once one more round changes it by at most
/// `cfg.tol` in L1. Measures with zero weight do not take part.
pub fn bregman_barycenter<T: Scalar>(
    measures: &[DiscreteMeasure<T>],
    weights: &[T],
    cfg: &EntropicConfig<T>,
) -> Result<DiscreteMeasure<T>> {
    let first = measures.first().ok_or(Error::EmptyInput)?;
    let kernel = GridKernel::new(first.height, first.width, cfg.gamma);
    bregman_with_kernel(&kernel, measures, weights, cfg)
}

/// [`bregman_barycenter`] with a prebuilt kernel.
pub fn bregman_with_kernel<T: Scalar>(
    kernel: &GridKernel<T>,
    measures: &[DiscreteMeasure<T>],
    weights: &[T],
    cfg: &EntropicConfig<T>,
) -> Result<DiscreteMeasure<T>> {
    let first = measures.first().ok_or(Error::EmptyInput)?;
    for m in measures {
        first.check_shape(m)?;
    }
    if kernel.height != first.height || kernel.width != first.width {
        return Err(Error::ShapeMismatch(
            kernel.height,
            kernel.width,
            first.height,
            first.width,
        ));
    }
    check_simplex(weights, measures.len())?;
    cfg.validate()?;
    let active: Vec<(&[T], T)> = measures
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > T::zero())
        .map(|(m, &w)| (m.weights.as_slice(), w))
        .collect();
    let p = match bregman_scaling(kernel, &active, cfg) {
        Some(result) => result?,
        None => bregman_log(kernel, &active, cfg)?,
    };
    DiscreteMeasure::from_intensities(first.height, first.width, p)
}

fn normalized<T: Scalar>(p: &[T]) -> Vec<T> {
    let total: T = p.iter().copied().sum();
    p.iter().map(|&x| x / total).collect()
}

fn bregman_scaling<T: Scalar>(
    kernel: &GridKernel<T>,
    active: &[(&[T], T)],
    cfg: &EntropicConfig<T>,
) -> Option<Result<Vec<T>>> {
    let n = kernel.len();
    let mut v = vec![vec![T::one(); n]; active.len()];
    let mut u = vec![vec![T::zero(); n]; active.len()];
    let mut ktu = vec![vec![T::zero(); n]; active.len()];
    let mut kv = vec![T::zero(); n];
    let mut log_p = vec![T::zero(); n];
    let mut prev: Option<Vec<T>> = None;
    for _ in 0..cfg.max_iters {
        log_p.iter_mut().for_each(|x| *x = T::zero());
        for (k, &(b, w)) in active.iter().enumerate() {
            kernel.apply(&v[k], &mut kv);
            divide_on_support(b, &kv, &mut u[k]);
            kernel.apply(&u[k], &mut ktu[k]);
            for (lp, &x) in log_p.iter_mut().zip(&ktu[k]) {
                *lp += w * x.ln();
            }
        }
        let p: Vec<T> = log_p.iter().map(|&x| x.exp()).collect();
        for k in 0..active.len() {
            for i in 0..n {
                v[k][i] = p[i] / ktu[k][i];
            }
        }
        let full = vec![T::one(); n];
        if active
            .iter()
            .enumerate()
            .any(|(k, &(b, _))| scaling_unstable(&u[k], b) || scaling_unstable(&v[k], &full))
        {
            return None;
        }
        let total: T = p.iter().copied().sum();
        if !(total > T::zero()) || !total.is_finite() {
            return None;
        }
        let current = normalized(&p);
        if let Some(prev) = &prev {
            let change: T = current.iter().zip(prev).map(|(&a, &b)| (a - b).abs()).sum();
            if change <= cfg.tol {
                return Some(Ok(current));
            }
        }
        prev = Some(current);
    }
    Some(Err(Error::NoConvergence {
        what: "Bregman barycenter",
        iterations: cfg.max_iters,
    }))
}

fn bregman_log<T: Scalar>(kernel: &GridKernel<T>, active: &[(&[T], T)], cfg: &EntropicConfig<T>) -> Result<Vec<T>> {
    let n = kernel.len();
    let log_b: Vec<Vec<T>> = active.iter().map(|&(b, _)| log_support(b)).collect();
    let mut lv = vec![vec![T::zero(); n]; active.len()];
    let mut lu = vec![T::zero(); n];
    let mut lktu = vec![vec![T::zero(); n]; active.len()];
    let mut lkv = vec![T::zero(); n];
    let mut lp = vec![T::zero(); n];
    let mut prev: Option<Vec<T>> = None;
    for _ in 0..cfg.max_iters {
        lp.iter_mut().for_each(|x| *x = T::zero());
        for (k, &(_, w)) in active.iter().enumerate() {
            kernel.apply_log(&lv[k], &mut lkv);
            for i in 0..n {
                lu[i] = log_b[k][i] - lkv[i];
            }
            kernel.apply_log(&lu, &mut lktu[k]);
            for (x, &y) in lp.iter_mut().zip(&lktu[k]) {
                *x += w * y;
            }
        }
        for k in 0..active.len() {
            for i in 0..n {
                lv[k][i] = lp[i] - lktu[k][i];
            }
        }
        let max = lp.iter().copied().fold(T::neg_infinity(), T::max);
        let current = normalized(&lp.iter().map(|&x| (x - max).exp()).collect::<Vec<_>>());
        if let Some(prev) = &prev {
            let change: T = current.iter().zip(prev).map(|(&a, &b)| (a - b).abs()).sum();
            if change <= cfg.tol {
                return Ok(current);
            }
        }
        prev = Some(current);
    }
    Err(Error::NoConvergence {
        what: "Bregman barycenter (log domain)",
        iterations: cfg.max_iters,
    })
}

/// Barycenter for nonnegative raw weights, normalized to the simplex first.
pub fn weighted_bregman_barycenter<T: Scalar>(
    measures: &[DiscreteMeasure<T>],
    raw_weights: &[T],
    cfg: &EntropicConfig<T>,
) -> Result<DiscreteMeasure<T>> {
    let first = measures.first().ok_or(Error::EmptyInput)?;
    let kernel = GridKernel::new(first.height, first.width, cfg.gamma);
    weighted_bregman_with_kernel(&kernel, measures, raw_weights, cfg)
}

pub fn weighted_bregman_with_kernel<T: Scalar>(
    kernel: &GridKernel<T>,
    measures: &[DiscreteMeasure<T>],
    raw_weights: &[T],
    cfg: &EntropicConfig<T>,
) -> Result<DiscreteMeasure<T>> {
    if raw_weights.len() != measures.len() {
        return Err(Error::DimensionMismatch {
            expected: measures.len(),
            found: raw_weights.len(),
        });
    }
    let weights = crate::gauss_ot::normalize_nonnegative(raw_weights)?;
    bregman_with_kernel(kernel, measures, &weights, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(gamma: f64) -> EntropicConfig<f64> {
        EntropicConfig::new(gamma, 20_000, 1e-9).unwrap()
    }

    fn blob(h: usize, w: usize, cy: f64, cx: f64, s: f64) -> DiscreteMeasure<f64> {
        let vals = (0..h * w)
            .map(|i| {
                let (y, x) = grid_point::<f64>(h, w, i);
                (-((y - cy).powi(2) + (x - cx).powi(2)) / (2.0 * s * s)).exp()
            })
            .collect();
        DiscreteMeasure::from_intensities(h, w, vals).unwrap()
    }

    #[test]
    fn measure_validation() {
        assert!(matches!(
            DiscreteMeasure::new(1, 2, vec![0.5, 0.6]),
            Err(Error::NotNormalized(_))
        ));
        assert!(matches!(
            DiscreteMeasure::from_intensities(1, 2, vec![0.0, 0.0]),
            Err(Error::ZeroMass)
        ));
        assert!(matches!(
            DiscreteMeasure::from_intensities(1, 2, vec![1.0, -1.0]),
            Err(Error::NegativeWeight { index: 1, .. })
        ));
        let m = DiscreteMeasure::from_intensities(1, 3, vec![1.0, 1e-14, 1.0]).unwrap();
        assert_eq!(m.weights(), &[0.5, 0.0, 0.5]);
    }

    #[test]
    fn separable_kernel_matches_dense() {
        let (h, w, gamma) = (5usize, 7usize, 0.05);
        let kernel = GridKernel::new(h, w, gamma);
        let v: Vec<f64> = (0..h * w).map(|i| ((i * 37 % 11) as f64) / 11.0 + 0.1).collect();
        let mut fast = vec![0.0; h * w];
        kernel.apply(&v, &mut fast);
        for (i, &got) in fast.iter().enumerate() {
            let (yi, xi) = grid_point::<f64>(h, w, i);
            let dense: f64 = (0..h * w)
                .map(|j| {
                    let (yj, xj) = grid_point::<f64>(h, w, j);
                    (-((yi - yj).powi(2) + (xi - xj).powi(2)) / gamma).exp() * v[j]
                })
                .sum();
            assert!((dense - got).abs() < 1e-12, "{dense} vs {got}");
        }
        let lv: Vec<f64> = v.iter().map(|x| x.ln()).collect();
        let mut logged = vec![0.0; h * w];
        kernel.apply_log(&lv, &mut logged);
        for i in 0..h * w {
            assert!((logged[i].exp() - fast[i]).abs() < 1e-12 * fast[i].max(1.0));
        }
    }

    #[test]
    fn point_masses_cost_is_squared_gap() {
        let a = DiscreteMeasure::point_mass(1, 16, 0, 2);
        let b = DiscreteMeasure::point_mass(1, 16, 0, 10);
        let (cost, _) = sinkhorn_w2(&a, &b, &cfg(0.005)).unwrap();
        let r = 8.0 / 16.0;
        assert!((cost - r * r).abs() < 1e-12);
    }

    #[test]
    fn far_apart_masses_use_log_domain() {
        let a = DiscreteMeasure::point_mass(1, 32, 0, 0);
        let b = DiscreteMeasure::point_mass(1, 32, 0, 31);
        let kernel = GridKernel::new(1, 32, 1e-3);
        let rep = sinkhorn_with_kernel(&kernel, &a, &b, &cfg(1e-3)).unwrap();
        assert!(rep.log_domain);
        let r = 31.0 / 32.0;
        assert!((rep.cost - r * r).abs() < 1e-12);
    }

    #[test]
    fn self_transport_bias_vanishes_with_gamma() {
        let a = blob(16, 16, 0.5, 0.4, 0.15);
        let mut last = f64::INFINITY;
        for gamma in [0.02, 0.01, 0.005, 0.0025] {
            let (cost, err) = sinkhorn_w2(&a, &a, &cfg(gamma)).unwrap();
            assert!(err <= 1e-9);
            assert!(cost < last, "bias not decreasing at γ = {gamma}");
            last = cost;
            if gamma == 0.005 {
                assert!(cost <= 0.01);
            }
        }
    }

    #[test]
    fn symmetric_self_transport_matches_alternating_solver() {
        let a = blob(12, 12, 0.45, 0.55, 0.15);
        let c = cfg(0.005);
        let kernel = GridKernel::new(12, 12, 0.005);
        let sym = self_transport_cost(&kernel, &a, &c).unwrap();
        let (alt, _) = sinkhorn_w2(&a, &a, &c).unwrap();
        assert!((sym.cost - alt).abs() < 1e-8, "{} vs {alt}", sym.cost);
        assert!(sym.iterations < 200);
        // sharp input: far faster than the alternating scheme's budget
        let sharp = DiscreteMeasure::point_mass(12, 12, 3, 4);
        let r = self_transport_cost(&kernel, &sharp, &EntropicConfig::default()).unwrap();
        assert_eq!(r.cost, 0.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = DiscreteMeasure::<f64>::uniform(2, 2);
        let b = DiscreteMeasure::<f64>::uniform(2, 3);
        assert!(matches!(sinkhorn_w2(&a, &b, &cfg(0.01)), Err(Error::ShapeMismatch(..))));
        assert!(matches!(
            bregman_barycenter(&[a, b], &[0.5, 0.5], &cfg(0.01)),
            Err(Error::ShapeMismatch(..))
        ));
    }

    #[test]
    fn iteration_budget_reported() {
        let a = blob(8, 8, 0.3, 0.3, 0.1);
        let b = blob(8, 8, 0.7, 0.6, 0.1);
        let tight = EntropicConfig::new(0.005, 2, 1e-14).unwrap();
        assert!(matches!(
            sinkhorn_w2(&a, &b, &tight),
            Err(Error::SinkhornNoConvergence { iterations: 2, .. })
        ));
    }

    #[test]
    fn barycenter_of_identical_measures_matches_single() {
        let a = blob(12, 12, 0.5, 0.5, 0.12);
        let c = cfg(0.005);
        let single = bregman_barycenter(std::slice::from_ref(&a), &[1.0], &c).unwrap();
        let pair = bregman_barycenter(&[a.clone(), a.clone()], &[0.3, 0.7], &c).unwrap();
        assert!(single.l1_distance(&pair) < 1e-6);
    }

    #[test]
    fn raw_weights_validation() {
        let a = blob(6, 6, 0.5, 0.5, 0.2);
        let c = cfg(0.01);
        assert!(matches!(
            weighted_bregman_barycenter(&[a.clone(), a.clone()], &[0.0, 0.0], &c),
            Err(Error::AllZeroWeights)
        ));
        assert!(matches!(
            weighted_bregman_barycenter(&[a.clone(), a.clone()], &[1.0, -0.5], &c),
            Err(Error::NegativeWeight { index: 1, .. })
        ));
        assert!(matches!(
            bregman_barycenter::<f64>(&[], &[], &c),
            Err(Error::EmptyInput)
        ));
    }
}
