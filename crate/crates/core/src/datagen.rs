//! Synthetic samples: random affine deformations of a location-scatter template,
//! and rasterized curve templates (circles, ellipses, curved triangles) under
//! random shifts and dilations.
//!
//! Draw `i` always comes from its own ChaCha stream `(seed, i)`, so a sample of
//! size `n` is a prefix of any larger sample with the same seed.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bootstrap::replicate_rng;
use crate::entropic::DiscreteMeasure;
use crate::error::{Error, Result};
use crate::gauss_ot::{CommutingMeasure, GaussianMeasure};
use crate::linalg::{Matrix, SpdMatrix};
use crate::scalar::Scalar;

/// Truncation point of all Gaussian noise, in standard deviations.
pub const TRUNCATION: f64 = 3.0;

/// Standard normal conditioned on `|z| ≤ 3`, by rejection.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= TRUNCATION {
            return z;
        }
    }
}

/// Uniformly random orthonormal `d × d` basis (Gram–Schmidt on a Gaussian matrix).
pub fn random_orthonormal_basis<T: Scalar>(d: usize, seed: u64) -> Matrix<T> {
    let mut rng = replicate_rng(seed, 0);
    loop {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
        for _ in 0..d {
            let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            for _ in 0..2 {
                for c in &cols {
                    let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(c).for_each(|(a, b)| *a -= dot * b);
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-6 {
                break;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            cols.push(v);
        }
        if cols.len() == d {
            let mut m = Matrix::zeros(d, d);
            for (j, c) in cols.iter().enumerate() {
                for (i, &x) in c.iter().enumerate() {
                    m[(i, j)] = T::lit(x);
                }
            }
            return m;
        }
    }
}

/// Commuting location-scatter law: draws have mean `r₀ + a` and sqrt-eigenvalues
/// `α ⊙ λ₀` in the fixed basis `U`, with `a = σ_a·TN(0, I)` and `α = 1 + σ_α·TN(0, I)`.
#[derive(Clone, Debug)]
pub struct ScatterLocationSpec<T> {
    pub template_mean: Vec<T>,
    pub template_sqrt_eigs: Vec<T>,
    pub basis: Arc<Matrix<T>>,
    pub mean_noise_scale: T,
    pub eig_noise_scale: T,
}

impl<T: Scalar> ScatterLocationSpec<T> {
    pub fn new(
        template_mean: Vec<T>,
        template_sqrt_eigs: Vec<T>,
        basis: Arc<Matrix<T>>,
        mean_noise_scale: T,
        eig_noise_scale: T,
    ) -> Result<Self> {
        let spec = Self {
            template_mean,
            template_sqrt_eigs,
            basis,
            mean_noise_scale,
            eig_noise_scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.template_mean.len()
    }

    pub fn template(&self) -> Result<CommutingMeasure<T>> {
        CommutingMeasure::new(
            Arc::clone(&self.basis),
            self.template_mean.clone(),
            self.template_sqrt_eigs.clone(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        if self.template_sqrt_eigs.len() != d || self.basis.rows() != d || self.basis.cols() != d {
            return Err(Error::InvalidSpec(format!(
                "template mean has dimension {d} but sqrt-eigenvalues have {} and the basis is {}x{}",
                self.template_sqrt_eigs.len(),
                self.basis.rows(),
                self.basis.cols()
            )));
        }
        if self.template_sqrt_eigs.iter().any(|&l| !(l > T::zero())) {
            return Err(Error::InvalidSpec("template sqrt-eigenvalues must be positive".into()));
        }
        if !(self.mean_noise_scale >= T::zero()) || !(self.eig_noise_scale >= T::zero()) {
            return Err(Error::InvalidSpec("noise scales must be nonnegative".into()));
        }
        // α ≥ 1 − 3σ_α must stay positive
        if !(T::lit(TRUNCATION) * self.eig_noise_scale < T::one()) {
            return Err(Error::InvalidSpec(format!(
                "eigenvalue noise scale {} must be below 1/3",
                self.eig_noise_scale
            )));
        }
        self.template()
            .map(|_| ())
            .map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> CommutingMeasure<T> {
        let mean = self
            .template_mean
            .iter()
            .map(|&r| r + self.mean_noise_scale * T::lit(truncated_normal(rng)))
            .collect();
        let sqrt_eigs = self
            .template_sqrt_eigs
            .iter()
            .map(|&l| (T::one() + self.eig_noise_scale * T::lit(truncated_normal(rng))) * l)
            .collect();
        CommutingMeasure::new(Arc::clone(&self.basis), mean, sqrt_eigs).expect("validated spec yields valid draws")
    }
}

/// `n` iid draws from a commuting location-scatter law.
pub fn sample_commuting<T: Scalar>(
    spec: &ScatterLocationSpec<T>,
    n: usize,
    seed: u64,
) -> Result<Vec<CommutingMeasure<T>>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidSpec("sample size must be at least 1".into()));
    }
    Ok((0..n).map(|i| spec.draw(&mut replicate_rng(seed, i as u64))).collect())
}

fn check_break(t_star: usize, m: usize) -> Result<()> {
    if t_star == 0 || t_star > m {
        return Err(Error::InvalidSpec(format!("break time {t_star} outside 1..={m}")));
    }
    Ok(())
}

/// Stream of length `m` whose frames `t < t_star` (1-based) come from `spec0`
/// and the rest from `spec1`. Both laws must share the basis.
pub fn sample_stream_with_break<T: Scalar>(
    spec0: &ScatterLocationSpec<T>,
    spec1: &ScatterLocationSpec<T>,
    t_star: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<CommutingMeasure<T>>> {
    spec0.validate()?;
    spec1.validate()?;
    check_break(t_star, m)?;
    if !spec0.template()?.shares_basis_with(&spec1.template()?) {
        return Err(Error::InvalidSpec(
            "pre- and post-break laws use different bases".into(),
        ));
    }
    // reuse one allocation of the basis so family checks hit the pointer fast path
    let spec1 = ScatterLocationSpec {
        basis: Arc::clone(&spec0.basis),
        ..spec1.clone()
    };
    Ok((0..m)
        .map(|i| {
            let spec = if i + 1 < t_star { spec0 } else { &spec1 };
            spec.draw(&mut replicate_rng(seed, i as u64))
        })
        .collect())
}

/// General location-scatter law: push-forward of a Gaussian template under
/// `x ↦ A x + a` with `A = I + E`, `E` symmetric with `σ_A·TN` entries.
#[derive(Clone, Debug)]
pub struct GeneralScatterSpec<T> {
    pub template: GaussianMeasure<T>,
    pub mean_noise_scale: T,
    pub matrix_noise_scale: T,
}

impl<T: Scalar> GeneralScatterSpec<T> {
    pub fn new(template: GaussianMeasure<T>, mean_noise_scale: T, matrix_noise_scale: T) -> Result<Self> {
        let spec = Self {
            template,
            mean_noise_scale,
            matrix_noise_scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_noise_scale >= T::zero()) || !(self.matrix_noise_scale >= T::zero()) {
            return Err(Error::InvalidSpec("noise scales must be nonnegative".into()));
        }
        // Gershgorin: keeps I + E positive definite
        let d = T::lit(self.template.dim() as f64);
        if !(T::lit(TRUNCATION) * self.matrix_noise_scale * d < T::one()) {
            return Err(Error::InvalidSpec(format!(
                "matrix noise scale {} must be below 1/(3d)",
                self.matrix_noise_scale
            )));
        }
        Ok(())
    }
}

/// `n` iid Gaussian draws `A·μ₀ + a`.
pub fn sample_general<T: Scalar>(spec: &GeneralScatterSpec<T>, n: usize, seed: u64) -> Result<Vec<GaussianMeasure<T>>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidSpec("sample size must be at least 1".into()));
    }
    let d = spec.template.dim();
    (0..n)
        .map(|i| {
            let mut rng = replicate_rng(seed, i as u64);
            let mut a = Matrix::identity(d);
            for r in 0..d {
                for c in r..d {
                    let e = spec.matrix_noise_scale * T::lit(truncated_normal(&mut rng));
                    a[(r, c)] += e;
                    if c != r {
                        a[(c, r)] += e;
                    }
                }
            }
            let mut mean = a.mul_vec(spec.template.mean());
            for m in mean.iter_mut() {
                *m += spec.mean_noise_scale * T::lit(truncated_normal(&mut rng));
            }
            let cov = (&(&a * spec.template.cov().as_matrix()) * &a).symmetrize();
            GaussianMeasure::new(mean, SpdMatrix::new(cov)?)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    /// Two concentric circles, radii 0.15 and 0.3; each is deformed on its own.
    #[serde(alias = "circles")]
    ConcentricCircles,
    /// One ellipse with semi-axes 0.32 (horizontal) and 0.16 (vertical).
    Ellipse,
    /// `r(θ) = 0.28 (1 + 0.2 cos 3θ)`.
    #[serde(alias = "triangle")]
    CurvedTriangle,
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemplateKind::ConcentricCircles => "circles",
            TemplateKind::Ellipse => "ellipse",
            TemplateKind::CurvedTriangle => "triangle",
        })
    }
}

impl FromStr for TemplateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "circles" | "concentric_circles" => Ok(TemplateKind::ConcentricCircles),
            "ellipse" => Ok(TemplateKind::Ellipse),
            "triangle" | "curved_triangle" => Ok(TemplateKind::CurvedTriangle),
            other => Err(Error::InvalidConfig(format!("unknown template '{other}'"))),
        }
    }
}

impl TemplateKind {
    /// Closed curves making up the shape, as offsets from the frame center.
    fn components(self) -> Vec<fn(f64) -> (f64, f64)> {
        match self {
            TemplateKind::ConcentricCircles => vec![|t: f64| (0.15 * t.sin(), 0.15 * t.cos()), |t: f64| {
                (0.3 * t.sin(), 0.3 * t.cos())
            }],
            TemplateKind::Ellipse => vec![|t: f64| (0.16 * t.sin(), 0.32 * t.cos())],
            TemplateKind::CurvedTriangle => vec![|t: f64| {
                let r = 0.28 * (1.0 + 0.2 * (3.0 * t).cos());
                (r * t.sin(), r * t.cos())
            }],
        }
    }
}

/// A curve template on an `H × W` grid and its random deformation ranges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageTemplateSpec {
    pub kind: TemplateKind,
    pub height: usize,
    pub width: usize,
    /// Each shape is shifted by `U[−s, s]` per axis (unit-square coordinates).
    pub shift_range: f64,
    /// Each shape is scaled by `U[1 − r, 1 + r]`.
    pub dilation_range: f64,
}

impl ImageTemplateSpec {
    pub const DEFAULT_RESOLUTION: usize = 50;
    pub const DEFAULT_SHIFT: f64 = 0.04;
    pub const DEFAULT_DILATION: f64 = 0.1;

    pub fn new(kind: TemplateKind, height: usize, width: usize) -> Self {
        Self {
            kind,
            height,
            width,
            shift_range: Self::DEFAULT_SHIFT,
            dilation_range: Self::DEFAULT_DILATION,
        }
    }

    pub fn with_deformation(mut self, shift_range: f64, dilation_range: f64) -> Self {
        self.shift_range = shift_range;
        self.dilation_range = dilation_range;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 8 {
            return Err(Error::InvalidSpec(format!(
                "resolution {}x{} is below 8x8",
                self.height, self.width
            )));
        }
        if !(self.shift_range >= 0.0) || !(0.0..1.0).contains(&self.dilation_range) {
            return Err(Error::InvalidSpec(format!(
                "deformation ranges must satisfy shift ≥ 0 and 0 ≤ dilation < 1 (got {}, {})",
                self.shift_range, self.dilation_range
            )));
        }
        Ok(())
    }
}

/// Affine deformation of one curve: center shift and isotropic dilation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeDeformation {
    pub shift: (f64, f64),
    pub dilation: f64,
}

impl ShapeDeformation {
    pub const IDENTITY: Self = Self {
        shift: (0.0, 0.0),
        dilation: 1.0,
    };
}

fn splat(img: &mut [f64], height: usize, width: usize, y: f64, x: f64, mass: f64) {
    let fy = y * height as f64 - 0.5;
    let fx = x * width as f64 - 0.5;
    let (r0, c0) = (fy.floor(), fx.floor());
    let (wy, wx) = (fy - r0, fx - c0);
    for (dr, my) in [(0.0, 1.0 - wy), (1.0, wy)] {
        for (dc, mx) in [(0.0, 1.0 - wx), (1.0, wx)] {
            let (r, c) = (r0 + dr, c0 + dc);
            if r >= 0.0 && c >= 0.0 && (r as usize) < height && (c as usize) < width {
                img[r as usize * width + c as usize] += mass * my * mx;
            }
        }
    }
}

/// Rasterizes the template with one deformation per component (uniform measure on the curves).
pub fn render_with<T: Scalar>(
    spec: &ImageTemplateSpec,
    deformations: &[ShapeDeformation],
) -> Result<DiscreteMeasure<T>> {
    spec.validate()?;
    let comps = spec.kind.components();
    if deformations.len() != comps.len() {
        return Err(Error::DimensionMismatch {
            expected: comps.len(),
            found: deformations.len(),
        });
    }
    let (h, w) = (spec.height, spec.width);
    let mut img = vec![0.0; h * w];
    let samples = 16 * h.max(w);
    for (curve, def) in comps.iter().zip(deformations) {
        let point = |k: usize| {
            let (dy, dx) = curve(TAU * k as f64 / samples as f64);
            (
                0.5 + def.shift.0 + def.dilation * dy,
                0.5 + def.shift.1 + def.dilation * dx,
            )
        };
        for k in 0..samples {
            let (p, q) = (point(k), point(k + 1));
            let len = ((q.0 - p.0).powi(2) + (q.1 - p.1).powi(2)).sqrt();
            splat(&mut img, h, w, 0.5 * (p.0 + q.0), 0.5 * (p.1 + q.1), len);
        }
    }
    DiscreteMeasure::from_intensities(h, w, img.into_iter().map(T::lit).collect()).map_err(|e| match e {
        Error::ZeroMass => Error::EmptyRender,
        other => other,
    })
}

/// The undeformed template.
pub fn render_template<T: Scalar>(spec: &ImageTemplateSpec) -> Result<DiscreteMeasure<T>> {
    render_with(spec, &vec![ShapeDeformation::IDENTITY; spec.kind.components().len()])
}

fn random_deformations<R: Rng + ?Sized>(spec: &ImageTemplateSpec, rng: &mut R) -> Vec<ShapeDeformation> {
    let mut unit = |r: f64| if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 };
    (0..spec.kind.components().len())
        .map(|_| ShapeDeformation {
            shift: (unit(spec.shift_range), unit(spec.shift_range)),
            dilation: 1.0 + unit(spec.dilation_range),
        })
        .collect()
}

/// `n` independently deformed renderings.
pub fn render_sample<T: Scalar>(spec: &ImageTemplateSpec, n: usize, seed: u64) -> Result<Vec<DiscreteMeasure<T>>> {
    spec.validate()?;
    (0..n)
        .map(|i| render_with(spec, &random_deformations(spec, &mut replicate_rng(seed, i as u64))))
        .collect()
}

/// Image stream of length `m`: frames `t < t_star` (1-based) from `spec0`, the rest from `spec1`.
pub fn render_stream_with_break<T: Scalar>(
    spec0: &ImageTemplateSpec,
    spec1: &ImageTemplateSpec,
    t_star: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<DiscreteMeasure<T>>> {
    spec0.validate()?;
    spec1.validate()?;
    check_break(t_star, m)?;
    if (spec0.height, spec0.width) != (spec1.height, spec1.width) {
        return Err(Error::InvalidSpec(
            "pre- and post-break templates differ in resolution".into(),
        ));
    }
    (0..m)
        .map(|i| {
            let spec = if i + 1 < t_star { spec0 } else { spec1 };
            render_with(spec, &random_deformations(spec, &mut replicate_rng(seed, i as u64)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sa: f64, se: f64) -> ScatterLocationSpec<f64> {
        ScatterLocationSpec::new(
            vec![1.0, -2.0],
            vec![1.0, 0.5],
            Arc::new(random_orthonormal_basis(2, 3)),
            sa,
            se,
        )
        .unwrap()
    }

    #[test]
    fn zero_noise_gives_template_copies() {
        let s = spec(0.0, 0.0);
        let draws = sample_commuting(&s, 5, 1).unwrap();
        let t = s.template().unwrap();
        assert!(draws
            .iter()
            .all(|d| d.mean() == t.mean() && d.sqrt_eigs() == t.sqrt_eigs()));
        assert!(draws.iter().all(|d| Arc::ptr_eq(d.basis(), &s.basis)));
    }

    #[test]
    fn invalid_specs_rejected() {
        let u = Arc::new(Matrix::identity(2));
        assert!(ScatterLocationSpec::new(vec![0.0; 2], vec![1.0, 0.0], Arc::clone(&u), 0.1, 0.1).is_err());
        assert!(ScatterLocationSpec::new(vec![0.0; 2], vec![1.0, 1.0], Arc::clone(&u), 0.1, 0.34).is_err());
        assert!(ScatterLocationSpec::new(vec![0.0; 2], vec![1.0], Arc::clone(&u), 0.1, 0.1).is_err());
        assert!(ScatterLocationSpec::new(vec![0.0; 2], vec![1.0, 1.0], u, -0.1, 0.1).is_err());
        assert!(sample_commuting(&spec(0.1, 0.1), 0, 0).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_prefix_stable() {
        let s = spec(0.3, 0.2);
        let a = sample_commuting(&s, 10, 42).unwrap();
        let b = sample_commuting(&s, 4, 42).unwrap();
        assert_eq!(&a[..4], &b[..]);
        assert_ne!(a, sample_commuting(&s, 10, 43).unwrap());
    }

    #[test]
    fn break_boundaries() {
        let s0 = spec(0.0, 0.0);
        let mut s1 = s0.clone();
        s1.template_mean = vec![5.0, 5.0];
        let all1 = sample_stream_with_break(&s0, &s1, 1, 4, 0).unwrap();
        assert!(all1.iter().all(|m| m.mean() == [5.0, 5.0]));
        let split = sample_stream_with_break(&s0, &s1, 3, 4, 0).unwrap();
        let means: Vec<f64> = split.iter().map(|m| m.mean()[0]).collect();
        assert_eq!(means, vec![1.0, 1.0, 5.0, 5.0]);
        assert!(sample_stream_with_break(&s0, &s1, 0, 4, 0).is_err());
        assert!(sample_stream_with_break(&s0, &s1, 5, 4, 0).is_err());
    }

    #[test]
    fn general_sampler_stays_positive_definite() {
        let t = GaussianMeasure::new(vec![1.0, 0.0, 0.0], SpdMatrix::from_diag(&[1.0, 0.5, 0.25])).unwrap();
        let s = GeneralScatterSpec::new(t, 0.1, 0.1).unwrap();
        let draws = sample_general(&s, 50, 5).unwrap();
        assert_eq!(draws.len(), 50);
        let bad = GeneralScatterSpec::new(draws[0].clone(), 0.1, 0.12);
        assert!(bad.is_err());
    }

    #[test]
    fn orthonormal_basis() {
        let u: Matrix<f64> = random_orthonormal_basis(5, 11);
        assert!((&u.transpose() * &u).max_abs_diff(&Matrix::identity(5)) < 1e-12);
    }

    #[test]
    fn rendering_basics() {
        for kind in [
            TemplateKind::ConcentricCircles,
            TemplateKind::Ellipse,
            TemplateKind::CurvedTriangle,
        ] {
            let s = ImageTemplateSpec::new(kind, 24, 24).with_deformation(0.0, 0.0);
            let t: DiscreteMeasure<f64> = render_template(&s).unwrap();
            let frames = render_sample::<f64>(&s, 3, 7).unwrap();
            assert!(frames.iter().all(|f| f == &t));
            let (r, c) = t.mean_position();
            assert!((r - 0.5).abs() < 1e-3 && (c - 0.5).abs() < 1e-3, "{kind}: {r} {c}");
        }
        let far = ImageTemplateSpec::new(TemplateKind::Ellipse, 16, 16);
        let gone = render_with::<f64>(
            &far,
            &[ShapeDeformation {
                shift: (3.0, 0.0),
                dilation: 1.0,
            }],
        );
        assert!(matches!(gone, Err(Error::EmptyRender)));
        assert!(render_template::<f64>(&ImageTemplateSpec::new(TemplateKind::Ellipse, 4, 16)).is_err());
    }

    #[test]
    fn circle_mass_splits_by_arc_length() {
        let s = ImageTemplateSpec::new(TemplateKind::ConcentricCircles, 64, 64);
        let t: DiscreteMeasure<f64> = render_template(&s).unwrap();
        let inner: f64 = t
            .weights()
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let (y, x) = crate::entropic::grid_point::<f64>(64, 64, *i);
                ((y - 0.5).powi(2) + (x - 0.5).powi(2)).sqrt() < 0.225
            })
            .map(|(_, &w)| w)
            .sum();
        assert!((inner - 1.0 / 3.0).abs() < 0.01, "{inner}");
    }
}
