//! Two-sample scanning statistic `T_h(t) = √h · W₂(μ_l(t), μ_r(t))` over a stream.
//!
//! Times are 1-based: the left half of the window at `t` is frames `t−h ..= t−1`
//! and the right half `t ..= t+h−1`, so `t` runs over `h+1 ..= M−h+1`. Window
//! halves are contiguous blocks of `h` frames and every block barycenter is
//! computed once per pass, whichever windows share it.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::bootstrap::{quantile_from_replicates, replicate_rng, BootstrapConfig, QuantileEstimate};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrideMode {
    /// Every admissible `t`.
    #[default]
    Sliding,
    /// `t = h+1, 3h+1, …`: windows that do not overlap.
    Disjoint,
}

impl fmt::Display for StrideMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrideMode::Sliding => "sliding",
            StrideMode::Disjoint => "disjoint",
        })
    }
}

impl FromStr for StrideMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sliding" => Ok(StrideMode::Sliding),
            "disjoint" => Ok(StrideMode::Disjoint),
            other => Err(Error::InvalidConfig(format!("unknown stride mode '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Half-window size; a window covers `2h` frames.
    pub h: usize,
    pub stride_mode: StrideMode,
    pub alpha: f64,
}

impl WindowConfig {
    pub fn new(h: usize, stride_mode: StrideMode, alpha: f64) -> Result<Self> {
        let cfg = Self { h, stride_mode, alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.h == 0 {
            return Err(Error::InvalidConfig("half-window h must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Window positions that fit a stream of length `len`.
pub fn admissible_times(len: usize, h: usize, mode: StrideMode) -> Result<Vec<usize>> {
    if h == 0 {
        return Err(Error::InvalidConfig("half-window h must be at least 1".into()));
    }
    if len < 2 * h {
        return Err(Error::StreamTooShort { len, needed: 2 * h });
    }
    let all = h + 1..=len - h + 1;
    Ok(match mode {
        StrideMode::Sliding => all.collect(),
        StrideMode::Disjoint => all.step_by(2 * h).collect(),
    })
}

fn check_window(len: usize, t: usize, h: usize) -> Result<()> {
    if h == 0 || t < h + 1 || t + h - 1 > len {
        return Err(Error::WindowOutOfRange { t, h, len });
    }
    Ok(())
}

/// `√h · d(barycenter of frames t−h..t−1, barycenter of frames t..t+h−1)`.
pub fn window_statistic<T: Scalar, B: Backend<T>>(backend: &B, stream: &[B::Measure], t: usize, h: usize) -> Result<T> {
    check_window(stream.len(), t, h)?;
    let left = backend.barycenter(&stream[t - 1 - h..t - 1])?;
    let right = backend.barycenter(&stream[t - 1..t - 1 + h])?;
    Ok(T::lit(h as f64).sqrt() * backend.distance(&left, &right)?)
}

/// Bootstrapped window statistic; `weights` covers the left half then the right
/// half, and each half is normalized by its own sum.
pub fn bootstrap_window_statistic<T: Scalar, B: Backend<T>>(
    backend: &B,
    stream: &[B::Measure],
    t: usize,
    h: usize,
    weights: &[T],
) -> Result<T> {
    check_window(stream.len(), t, h)?;
    if weights.len() != 2 * h {
        return Err(Error::DimensionMismatch {
            expected: 2 * h,
            found: weights.len(),
        });
    }
    let left = backend.weighted_barycenter(&stream[t - 1 - h..t - 1], &weights[..h])?;
    let right = backend.weighted_barycenter(&stream[t - 1..t - 1 + h], &weights[h..])?;
    Ok(T::lit(h as f64).sqrt() * backend.distance(&left, &right)?)
}

/// Block starts (0-based) needed by the windows at `times`, ascending.
fn block_starts(times: &[usize], h: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = times.iter().flat_map(|&t| [t - 1 - h, t - 1]).collect();
    starts.sort_unstable();
    starts.dedup();
    starts
}

struct Blocks<S> {
    starts: Vec<usize>,
    summaries: Vec<S>,
}

impl<S> Blocks<S> {
    fn get(&self, start: usize) -> &S {
        let i = self.starts.binary_search(&start).expect("block was computed");
        &self.summaries[i]
    }
}

fn window_stats<T: Scalar, B: Backend<T>>(
    backend: &B,
    blocks: &Blocks<B::Summary>,
    times: &[usize],
    h: usize,
    parallel: bool,
) -> Result<Vec<T>> {
    let scale = T::lit(h as f64).sqrt();
    let one = |&t: &usize| -> Result<T> { Ok(scale * backend.distance(blocks.get(t - 1 - h), blocks.get(t - 1))?) };
    if parallel {
        times.par_iter().map(one).collect()
    } else {
        times.iter().map(one).collect()
    }
}

/// Bootstrap critical value `z_h^♭(α)` from a homogeneous training stream.
///
/// Replicate `j` gives every training frame one weight; a window half whose
/// weights sum to a nonpositive value gets a fresh weight vector for that block
/// only. The replicate value is the maximum bootstrapped statistic over the
/// window positions of `cfg.stride_mode`.
pub fn calibrate_threshold<T: Scalar, B: Backend<T>>(
    backend: &B,
    training: &[B::Measure],
    cfg: &WindowConfig,
    bcfg: &BootstrapConfig,
) -> Result<QuantileEstimate<T>> {
    cfg.validate()?;
    bcfg.check_backend(backend)?;
    let h = cfg.h;
    let times = admissible_times(training.len(), h, cfg.stride_mode)?;
    let starts = block_starts(&times, h);
    let maxima = (0..bcfg.replicates)
        .into_par_iter()
        .map(|j| {
            let mut rng = replicate_rng(bcfg.seed, j as u64);
            let w: Vec<f64> = (0..training.len()).map(|_| bcfg.law.sample(&mut rng)).collect();
            let mut summaries = Vec::with_capacity(starts.len());
            for &s in &starts {
                let mut ws: Vec<T> = w[s..s + h].iter().map(|&x| T::lit(x)).collect();
                if ws.iter().copied().sum::<T>() <= T::zero() {
                    ws = bcfg.law.draw(h, &mut rng)?;
                }
                summaries.push(backend.weighted_barycenter(&training[s..s + h], &ws)?);
            }
            let blocks = Blocks {
                starts: starts.clone(),
                summaries,
            };
            let stats = window_stats(backend, &blocks, &times, h, false)?;
            Ok(stats.into_iter().fold(T::neg_infinity(), T::max))
        })
        .collect::<Result<Vec<T>>>()?;
    quantile_from_replicates(maxima, cfg.alpha)
}

/// `T_h(t)` at every position of `mode`, as `(t, statistic)` pairs in `t` order.
pub fn statistic_trace<T: Scalar, B: Backend<T>>(
    backend: &B,
    stream: &[B::Measure],
    h: usize,
    mode: StrideMode,
) -> Result<Vec<(usize, T)>> {
    let times = admissible_times(stream.len(), h, mode)?;
    let starts = block_starts(&times, h);
    let summaries = starts
        .par_iter()
        .map(|&s| backend.barycenter(&stream[s..s + h]))
        .collect::<Result<Vec<_>>>()?;
    let blocks = Blocks { starts, summaries };
    let stats = window_stats(backend, &blocks, &times, h, true)?;
    Ok(times.into_iter().zip(stats).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowRecord<T> {
    pub t: usize,
    pub statistic: T,
    pub threshold: T,
    pub alarm: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionReport<T> {
    pub records: Vec<WindowRecord<T>>,
    pub first_alarm: Option<usize>,
}

impl<T: Scalar> DetectionReport<T> {
    pub fn alarm_count(&self) -> usize {
        self.records.iter().filter(|r| r.alarm).count()
    }
}

/// Evaluates `T_h(t)` along the stream and flags `T_h(t) ≥ threshold`.
pub fn scan<T: Scalar, B: Backend<T>>(
    backend: &B,
    stream: &[B::Measure],
    cfg: &WindowConfig,
    threshold: T,
) -> Result<DetectionReport<T>> {
    cfg.validate()?;
    let records: Vec<WindowRecord<T>> = statistic_trace(backend, stream, cfg.h, cfg.stride_mode)?
        .into_iter()
        .map(|(t, statistic)| WindowRecord {
            t,
            statistic,
            threshold,
            alarm: statistic >= threshold,
        })
        .collect();
    let first_alarm = records.iter().find(|r| r.alarm).map(|r| r.t);
    Ok(DetectionReport { records, first_alarm })
}
