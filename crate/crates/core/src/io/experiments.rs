//! Monte-Carlo confidence-set experiments and change-point runs driven by an
//! [`ExperimentConfig`].

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::backend::{Backend, CommutingBackend, EntropicBackend, GaussianBackend};
use crate::bootstrap::{calibrate_quantile, quantile_from_replicates, replicate_rng, WeightLaw};
use crate::changepoint::{calibrate_threshold, scan, StrideMode, WindowRecord};
use crate::datagen::{
    render_sample, render_stream_with_break, render_template, sample_commuting, sample_stream_with_break,
};
use crate::entropic::DiscreteMeasure;
use crate::error::{Error, Result};
use crate::io::config::{BackendKind, DataSection, ExperimentConfig, MnistSection};
use crate::io::idx::load_idx_images;
use crate::io::output::{fmt_float, CsvRecord};

/// Independent seed for stream `stream` of `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    replicate_rng(seed, stream).gen()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfsetRow {
    pub n: usize,
    pub alpha: f64,
    /// Share of runs whose confidence set contains the reference measure.
    pub covered_rate: f64,
    /// Share of runs whose confidence set excludes the alternative measure.
    pub rejected_rate: f64,
    pub runs: usize,
    pub seed: u64,
}

impl CsvRecord for ConfsetRow {
    const HEADER: &'static [&'static str] = &["n", "alpha", "covered_rate", "rejected_rate", "runs", "seed"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            fmt_float(self.alpha),
            fmt_float(self.covered_rate),
            fmt_float(self.rejected_rate),
            self.runs.to_string(),
            self.seed.to_string(),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfsetReport {
    pub backend: BackendKind,
    pub law: WeightLaw,
    pub replicates: usize,
    /// How samples are drawn: `iid` for synthetic data, `without_replacement` for image files.
    pub sampling: &'static str,
    pub rows: Vec<ConfsetRow>,
}

/// Draws the sample of size `n` for one run from `seed`.
type Draw<'a, M> = dyn Fn(usize, u64) -> Result<Vec<M>> + Sync + 'a;

fn confset_rows<B: Backend<f64>>(
    cfg: &ExperimentConfig,
    backend: &B,
    reference: &B::Summary,
    alternative: &B::Summary,
    draw: &Draw<'_, B::Measure>,
) -> Result<Vec<ConfsetRow>> {
    let mut rows = Vec::new();
    for &n in &cfg.sample_sizes {
        let outcomes = (0..cfg.runs)
            .into_par_iter()
            .map(|run| {
                let mut rng = replicate_rng(cfg.seed, ((n as u64) << 32) | run as u64);
                let sample = draw(n, rng.gen())?;
                let bcfg = cfg.bootstrap_config(rng.gen(), cfg.alphas[0])?;
                let stats = calibrate_quantile(backend, &sample, &bcfg)?.replicate_stats;
                let center = backend.barycenter(&sample)?;
                let scale = (n as f64).sqrt();
                let t_ref = scale * backend.distance(&center, reference)?;
                let t_alt = scale * backend.distance(&center, alternative)?;
                cfg.alphas
                    .iter()
                    .map(|&alpha| {
                        let z = quantile_from_replicates(stats.clone(), alpha)?.z_alpha;
                        Ok((t_ref <= z, t_alt > z))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, &alpha) in cfg.alphas.iter().enumerate() {
            let covered = outcomes.iter().filter(|o| o[k].0).count();
            let rejected = outcomes.iter().filter(|o| o[k].1).count();
            rows.push(ConfsetRow {
                n,
                alpha,
                covered_rate: covered as f64 / cfg.runs as f64,
                rejected_rate: rejected as f64 / cfg.runs as f64,
                runs: cfg.runs,
                seed: cfg.seed,
            });
        }
    }
    Ok(rows)
}

/// Pools of one digit: a reference subset and the images samples are drawn from.
struct DigitPool {
    reference: Vec<DiscreteMeasure<f64>>,
    rest: Vec<DiscreteMeasure<f64>>,
}

fn digit_pool(m: &MnistSection, digit: u8, seed: u64) -> Result<DigitPool> {
    let mut all = load_idx_images::<f64>(&m.images, Some(&m.labels), Some(digit))?;
    if all.len() <= m.reference_size {
        return Err(Error::InvalidConfig(format!(
            "only {} images with label {digit}, need more than reference_size = {}",
            all.len(),
            m.reference_size
        )));
    }
    all.shuffle(&mut replicate_rng(seed, digit as u64));
    let rest = all.split_off(m.reference_size);
    Ok(DigitPool { reference: all, rest })
}

fn draw_without_replacement(pool: &[DiscreteMeasure<f64>], n: usize, seed: u64) -> Result<Vec<DiscreteMeasure<f64>>> {
    if n > pool.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot draw {n} distinct images from a pool of {}",
            pool.len()
        )));
    }
    let mut rng = replicate_rng(seed, 0);
    Ok(index::sample(&mut rng, pool.len(), n)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

/// Coverage of the reference measure and rejection of the alternative, per `(n, α)`.
pub fn run_confset_experiment(cfg: &ExperimentConfig) -> Result<ConfsetReport> {
    cfg.validate()?;
    let mut sampling = "iid";
    let rows = match (&cfg.data, cfg.backend) {
        (DataSection::Scatter(s), BackendKind::Commuting) => {
            let (spec, alt) = (s.spec()?, s.alternative_spec()?);
            let b = CommutingBackend;
            let draw = |n, seed| sample_commuting(&spec, n, seed);
            confset_rows(cfg, &b, &spec.template()?.moments(), &alt.template()?.moments(), &draw)?
        }
        (DataSection::Scatter(s), BackendKind::Gaussian) => {
            let (spec, alt) = (s.spec()?, s.alternative_spec()?);
            let draw = |n, seed| {
                Ok(sample_commuting(&spec, n, seed)?
                    .iter()
                    .map(|m| m.to_gaussian())
                    .collect())
            };
            confset_rows(
                cfg,
                &GaussianBackend,
                &spec.template()?.to_gaussian(),
                &alt.template()?.to_gaussian(),
                &draw,
            )?
        }
        (DataSection::Images(s), BackendKind::Entropic) => {
            let b = cfg.entropic.backend()?;
            let reference = b.summarize(&render_template(&s.spec())?)?;
            let alternative = b.summarize(&render_template(&s.alternative_spec())?)?;
            let spec = s.spec();
            let draw = |n, seed| render_sample(&spec, n, seed);
            confset_rows(cfg, &b, &reference, &alternative, &draw)?
        }
        (DataSection::Mnist(m), BackendKind::Entropic) => {
            sampling = "without_replacement";
            let b = cfg.entropic.backend()?;
            let pool = digit_pool(m, m.digit, cfg.seed)?;
            let alt = digit_pool(m, m.alternative, cfg.seed)?;
            let reference = b.barycenter(&pool.reference)?;
            let alternative = b.barycenter(&alt.reference)?;
            let draw = |n, seed| draw_without_replacement(&pool.rest, n, seed);
            confset_rows(cfg, &b, &reference, &alternative, &draw)?
        }
        _ => unreachable!("validate() rejects backend/data combinations"),
    };
    Ok(ConfsetReport {
        backend: cfg.backend,
        law: cfg.bootstrap.law,
        replicates: cfg.bootstrap.replicates,
        sampling,
        rows,
    })
}

impl CsvRecord for WindowRecord<f64> {
    const HEADER: &'static [&'static str] = &["t", "statistic", "threshold", "alarm"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.t.to_string(),
            fmt_float(self.statistic),
            fmt_float(self.threshold),
            self.alarm.to_string(),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CpdetectReport {
    pub backend: BackendKind,
    pub law: WeightLaw,
    pub replicates: usize,
    pub alpha: f64,
    pub h: usize,
    pub stride_mode: StrideMode,
    pub train_len: usize,
    pub length: usize,
    pub t_star: usize,
    pub seed: u64,
    pub threshold: f64,
    pub first_alarm: Option<usize>,
    pub records: Vec<WindowRecord<f64>>,
}

fn detect<B: Backend<f64>>(
    cfg: &ExperimentConfig,
    backend: &B,
    training: &[B::Measure],
    stream: &[B::Measure],
) -> Result<CpdetectReport> {
    let wcfg = cfg.window_config()?;
    let bcfg = cfg.bootstrap_config(derive_seed(cfg.seed, 3), wcfg.alpha)?;
    let q = calibrate_threshold(backend, training, &wcfg, &bcfg)?;
    let report = scan(backend, stream, &wcfg, q.z_alpha)?;
    let cp = &cfg.changepoint;
    Ok(CpdetectReport {
        backend: cfg.backend,
        law: cfg.bootstrap.law,
        replicates: cfg.bootstrap.replicates,
        alpha: wcfg.alpha,
        h: cp.h,
        stride_mode: cp.stride_mode,
        train_len: cp.train_len,
        length: cp.length,
        t_star: cp.t_star,
        seed: cfg.seed,
        threshold: q.z_alpha,
        first_alarm: report.first_alarm,
        records: report.records,
    })
}

/// Calibrates on a homogeneous training stream, then scans a stream with a break at `t_star`.
///
/// Training and scanned streams are drawn independently; both come from the
/// pre-break law before `t_star`.
pub fn run_cpdetect(cfg: &ExperimentConfig) -> Result<CpdetectReport> {
    cfg.validate()?;
    let cp = &cfg.changepoint;
    let (train_seed, scan_seed) = (derive_seed(cfg.seed, 1), derive_seed(cfg.seed, 2));
    match (&cfg.data, cfg.backend) {
        (DataSection::Scatter(s), BackendKind::Commuting) => {
            let (spec, alt) = (s.spec()?, s.alternative_spec()?);
            let training = sample_commuting(&spec, cp.train_len, train_seed)?;
            let stream = sample_stream_with_break(&spec, &alt, cp.t_star, cp.length, scan_seed)?;
            detect(cfg, &CommutingBackend, &training, &stream)
        }
        (DataSection::Scatter(s), BackendKind::Gaussian) => {
            let (spec, alt) = (s.spec()?, s.alternative_spec()?);
            let g =
                |v: Vec<crate::gauss_ot::CommutingMeasure<f64>>| v.iter().map(|m| m.to_gaussian()).collect::<Vec<_>>();
            let training = g(sample_commuting(&spec, cp.train_len, train_seed)?);
            let stream = g(sample_stream_with_break(&spec, &alt, cp.t_star, cp.length, scan_seed)?);
            detect(cfg, &GaussianBackend, &training, &stream)
        }
        (DataSection::Images(s), BackendKind::Entropic) => {
            let b: EntropicBackend<f64> = cfg.entropic.backend()?;
            let training = render_sample(&s.spec(), cp.train_len, train_seed)?;
            let stream = render_stream_with_break(&s.spec(), &s.alternative_spec(), cp.t_star, cp.length, scan_seed)?;
            detect(cfg, &b, &training, &stream)
        }
        (DataSection::Mnist(m), BackendKind::Entropic) => {
            let b = cfg.entropic.backend()?;
            let pre = digit_pool(m, m.digit, cfg.seed)?.rest;
            let post = digit_pool(m, m.alternative, cfg.seed)?.rest;
            let n_pre = cp.t_star - 1;
            let n_post = cp.length - n_pre;
            if pre.len() < cp.train_len + n_pre || post.len() < n_post {
                return Err(Error::InvalidConfig(
                    "not enough images for the requested streams".into(),
                ));
            }
            let training = pre[..cp.train_len].to_vec();
            let mut stream = pre[cp.train_len..cp.train_len + n_pre].to_vec();
            stream.extend_from_slice(&post[..n_post]);
            detect(cfg, &b, &training, &stream)
        }
        _ => unreachable!("validate() rejects backend/data combinations"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confset_runs_are_deterministic() {
        let cfg = ExperimentConfig::from_toml_str(
            "runs = 8\nsample_sizes = [10]\nalphas = [0.1, 0.05]\n[bootstrap]\nreplicates = 100",
        )
        .unwrap();
        let a = run_confset_experiment(&cfg).unwrap();
        assert_eq!(a, run_confset_experiment(&cfg).unwrap());
        assert_eq!(a.rows.len(), 2);
        // a wider set covers at least as often
        assert!(a.rows[1].covered_rate >= a.rows[0].covered_rate);
    }

    #[test]
    fn cpdetect_commuting_finds_a_big_jump() {
        let cfg = ExperimentConfig::from_toml_str(
            "[bootstrap]\nreplicates = 200\n[data]\nsource = \"scatter\"\nalternative_shift = 40.0\n\
             [changepoint]\nh = 10\nlength = 100\nt_star = 50\ntrain_len = 60",
        )
        .unwrap();
        let r = run_cpdetect(&cfg).unwrap();
        let first = r.first_alarm.expect("jump detected");
        assert!((40..=60).contains(&first), "{first}");
    }
}
