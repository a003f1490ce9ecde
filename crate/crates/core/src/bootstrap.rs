//! Multiplier-bootstrap calibration of `T_n = √n · W₂(μ_n, μ)` and the resulting
//! confidence sets for the population barycenter.
//!
//! Replicate `j` draws its weights from its own ChaCha stream (`seed`, stream `j`),
//! so results do not depend on how rayon schedules the replicates.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, CommutingBackend};
use crate::error::{Error, Result};
use crate::gauss_ot::CommutingMeasure;
use crate::scalar::Scalar;

/// Redraws allowed when a weight vector has a nonpositive sum.
pub const MAX_REDRAWS: usize = 100;

/// Multiplier law; every variant has unit mean and unit variance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightLaw {
    Poisson1,
    Exp1,
    Normal11,
}

impl WeightLaw {
    pub const ALL: [WeightLaw; 3] = [WeightLaw::Poisson1, WeightLaw::Exp1, WeightLaw::Normal11];

    pub fn name(self) -> &'static str {
        match self {
            WeightLaw::Poisson1 => "poisson1",
            WeightLaw::Exp1 => "exp1",
            WeightLaw::Normal11 => "normal11",
        }
    }

    pub fn is_nonnegative(self) -> bool {
        !matches!(self, WeightLaw::Normal11)
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            WeightLaw::Poisson1 => Poisson::new(1.0).expect("unit rate").sample(rng),
            WeightLaw::Exp1 => Exp1.sample(rng),
            WeightLaw::Normal11 => {
                let z: f64 = StandardNormal.sample(rng);
                1.0 + z
            }
        }
    }

    /// `n` weights with a positive sum, redrawing the whole vector up to [`MAX_REDRAWS`] times.
    pub fn draw<T: Scalar, R: Rng + ?Sized>(self, n: usize, rng: &mut R) -> Result<Vec<T>> {
        for _ in 0..=MAX_REDRAWS {
            let w: Vec<f64> = (0..n).map(|_| self.sample(rng)).collect();
            if w.iter().sum::<f64>() > 0.0 {
                return Ok(w.into_iter().map(T::lit).collect());
            }
        }
        Err(Error::DegenerateWeights { attempts: MAX_REDRAWS })
    }
}

impl fmt::Display for WeightLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "poisson" | "poisson1" => Ok(WeightLaw::Poisson1),
            "exp" | "exp1" | "exponential" => Ok(WeightLaw::Exp1),
            "normal" | "normal11" | "gaussian" => Ok(WeightLaw::Normal11),
            other => Err(Error::InvalidConfig(format!("unknown weight law '{other}'"))),
        }
    }
}

/// Independent, reproducible generator for replicate `j` under `seed`.
pub fn replicate_rng(seed: u64, j: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(j);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub law: WeightLaw,
    pub replicates: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl BootstrapConfig {
    pub fn new(law: WeightLaw, replicates: usize, seed: u64, alpha: f64) -> Result<Self> {
        let cfg = Self {
            law,
            replicates,
            seed,
            alpha,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicate count must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    pub(crate) fn check_backend<T: Scalar, B: Backend<T>>(&self, backend: &B) -> Result<()> {
        self.validate()?;
        if !self.law.is_nonnegative() && !backend.supports_signed_weights() {
            return Err(Error::UnsupportedWeightLaw(self.law.name(), backend.name()));
        }
        Ok(())
    }
}

/// Bootstrap critical value together with the replicate statistics it came from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantileEstimate<T> {
    pub z_alpha: T,
    pub replicate_stats: Vec<T>,
    pub alpha: f64,
}

/// 1-based rank `⌈(1−α)J⌉` of the order statistic used as the `(1−α)`-quantile.
pub fn quantile_rank(alpha: f64, replicates: usize) -> usize {
    // the small offset keeps exact products like 0.95·100 from rounding up
    let r = ((1.0 - alpha) * replicates as f64 - 1e-9).ceil();
    (r.max(1.0) as usize).min(replicates)
}

/// Inverse of the right-continuous ECDF of `stats` at `1 − alpha`.
pub fn quantile_from_replicates<T: Scalar>(stats: Vec<T>, alpha: f64) -> Result<QuantileEstimate<T>> {
    if stats.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if stats.iter().any(|s| s.is_nan()) {
        return Err(Error::NoConvergence {
            what: "bootstrap replicate",
            iterations: 0,
        });
    }
    let mut sorted = stats.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered above"));
    let z_alpha = sorted[quantile_rank(alpha, sorted.len()) - 1];
    Ok(QuantileEstimate {
        z_alpha,
        replicate_stats: stats,
        alpha,
    })
}

fn sqrt_n<T: Scalar>(n: usize) -> T {
    T::lit(n as f64).sqrt()
}

/// `T_n = √n · d(barycenter(sample), reference)` for any backend.
pub fn statistic<T: Scalar, B: Backend<T>>(backend: &B, sample: &[B::Measure], reference: &B::Summary) -> Result<T> {
    let center = backend.barycenter(sample)?;
    Ok(sqrt_n::<T>(sample.len()) * backend.distance(&center, reference)?)
}

/// `T_n^♭ = √n · d(weighted barycenter, unweighted barycenter)`.
pub fn bootstrap_statistic<T: Scalar, B: Backend<T>>(
    backend: &B,
    sample: &[B::Measure],
    center: &B::Summary,
    raw_weights: &[T],
) -> Result<T> {
    let boot = backend.weighted_barycenter(sample, raw_weights)?;
    Ok(sqrt_n::<T>(sample.len()) * backend.distance(&boot, center)?)
}

/// `√(n‖m̄ − r₀‖² + n‖λ̄ − λ₀‖²)`.
pub fn statistic_commuting<T: Scalar>(sample: &[CommutingMeasure<T>], reference: &CommutingMeasure<T>) -> Result<T> {
    let first = sample.first().ok_or(Error::EmptyInput)?;
    CommutingBackend.check_compatible(first, reference)?;
    statistic(&CommutingBackend, sample, &reference.moments())
}

/// `√(n‖m̄^♭ − m̄‖² + n‖λ̄^♭ − λ̄‖²)` with the weighted means normalized by `Σ wᵢ`.
pub fn bootstrap_statistic_commuting<T: Scalar>(sample: &[CommutingMeasure<T>], raw_weights: &[T]) -> Result<T> {
    let center = CommutingBackend.barycenter(sample)?;
    bootstrap_statistic(&CommutingBackend, sample, &center, raw_weights)
}

/// Draws `J` weight vectors and returns the `(1−α)`-quantile of `T_n^♭`.
pub fn calibrate_quantile<T: Scalar, B: Backend<T>>(
    backend: &B,
    sample: &[B::Measure],
    cfg: &BootstrapConfig,
) -> Result<QuantileEstimate<T>> {
    cfg.check_backend(backend)?;
    if sample.is_empty() {
        return Err(Error::EmptyInput);
    }
    let center = backend.barycenter(sample)?;
    let stats = (0..cfg.replicates)
        .into_par_iter()
        .map(|j| {
            let mut rng = replicate_rng(cfg.seed, j as u64);
            let w = cfg.law.draw::<T, _>(sample.len(), &mut rng)?;
            bootstrap_statistic(backend, sample, &center, &w)
        })
        .collect::<Result<Vec<T>>>()?;
    quantile_from_replicates(stats, cfg.alpha)
}

/// `{ν : √n · d(μ_n, ν) ≤ z}` around a fixed sample barycenter.
#[derive(Clone, Debug)]
pub struct ConfidenceSet<T, S> {
    pub center: S,
    pub n: usize,
    pub z_alpha: T,
}

impl<T: Scalar, S> ConfidenceSet<T, S> {
    pub fn from_sample<B: Backend<T, Summary = S>>(
        backend: &B,
        sample: &[B::Measure],
        q: &QuantileEstimate<T>,
    ) -> Result<Self> {
        Ok(Self {
            center: backend.barycenter(sample)?,
            n: sample.len(),
            z_alpha: q.z_alpha,
        })
    }

    /// Scaled distance of `candidate` from the center.
    pub fn statistic<B: Backend<T, Summary = S>>(&self, backend: &B, candidate: &B::Measure) -> Result<T> {
        let c = backend.summarize(candidate)?;
        Ok(sqrt_n::<T>(self.n) * backend.distance(&self.center, &c)?)
    }

    pub fn contains<B: Backend<T, Summary = S>>(&self, backend: &B, candidate: &B::Measure) -> Result<bool> {
        Ok(self.statistic(backend, candidate)? <= self.z_alpha)
    }
}

/// `√n · d(μ_n, candidate) ≤ q.z_alpha`.
pub fn confidence_set_contains<T: Scalar, B: Backend<T>>(
    backend: &B,
    sample: &[B::Measure],
    candidate: &B::Measure,
    q: &QuantileEstimate<T>,
) -> Result<bool> {
    let first = sample.first().ok_or(Error::EmptyInput)?;
    backend.check_compatible(first, candidate)?;
    ConfidenceSet::from_sample(backend, sample, q)?.contains(backend, candidate)
}
