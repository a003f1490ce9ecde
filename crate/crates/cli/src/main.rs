//! `wbary`: W₂ distances, barycenters, bootstrap confidence-set experiments,
//! change-point scans and synthetic data generation.
//!
//! Exit status: 0 on success, 2 for bad input or configuration, 3 when a
//! numerical routine fails (no convergence, degenerate weights, …).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wbary::bootstrap::WeightLaw;
use wbary::changepoint::StrideMode;
use wbary::datagen::{render_sample, render_stream_with_break, sample_commuting, ImageTemplateSpec, TemplateKind};
use wbary::io::config::{DataSection, ScatterSection};
use wbary::io::output::{fmt_float, to_csv, to_json, write_text};
use wbary::io::{
    barycenter_any, run_confset_experiment, run_cpdetect, w2_any, AnyMeasure, BackendKind, ExperimentConfig,
};
use wbary::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "wbary", version, about = "Bootstrap inference for Wasserstein barycenters")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print JSON.
    #[arg(long, global = true)]
    json: bool,
    /// Print CSV (the default for tables).
    #[arg(long, global = true)]
    csv: bool,
    /// Write result files into this directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct EntropicFlags {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Report the raw Sinkhorn cost without subtracting self-transport terms.
    #[arg(long)]
    no_debias: bool,
}

#[derive(Args, Debug, Default)]
struct BootstrapFlags {
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    law: Option<WeightLaw>,
    /// Bootstrap replicate count J.
    #[arg(long)]
    replicates: Option<usize>,
    /// Comma-separated significance levels.
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// W₂ distance between two measure files.
    W2 {
        #[arg(long)]
        backend: Option<BackendKind>,
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        entropic: EntropicFlags,
    },
    /// Barycenter of measure files (uniform unless --weights is given).
    Barycenter {
        #[arg(long)]
        backend: Option<BackendKind>,
        #[arg(long, value_delimiter = ',')]
        weights: Vec<f64>,
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[command(flatten)]
        entropic: EntropicFlags,
    },
    /// Monte-Carlo coverage / rejection rates of bootstrap confidence sets.
    Confset {
        #[command(flatten)]
        boot: BootstrapFlags,
        #[arg(long)]
        runs: Option<usize>,
        /// Comma-separated sample sizes.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        #[command(flatten)]
        entropic: EntropicFlags,
    },
    /// Calibrate a threshold on a training stream and scan a stream with a break.
    Cpdetect {
        #[command(flatten)]
        boot: BootstrapFlags,
        #[arg(long)]
        h: Option<usize>,
        /// Length of the scanned stream.
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        t_star: Option<usize>,
        #[arg(long)]
        train_len: Option<usize>,
        #[arg(long)]
        stride: Option<StrideMode>,
        #[command(flatten)]
        entropic: EntropicFlags,
    },
    /// Generate synthetic measures: circles, ellipse, triangle or scatter.
    Gen {
        kind: String,
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Grid size as `N` or `HxW`.
        #[arg(long)]
        resolution: Option<String>,
        #[arg(long)]
        shift: Option<f64>,
        #[arg(long)]
        dilation: Option<f64>,
        /// Switch to template `--to` from this 1-based frame on.
        #[arg(long, requires = "to")]
        t_star: Option<usize>,
        #[arg(long)]
        to: Option<TemplateKind>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            Error::Io(io) => Error::InvalidConfig(format!("{}: {io}", p.display())),
            other => other,
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn apply_entropic(cfg: &mut ExperimentConfig, f: &EntropicFlags) {
    let e = &mut cfg.entropic;
    e.gamma = f.gamma.unwrap_or(e.gamma);
    e.tol = f.tol.unwrap_or(e.tol);
    e.max_iters = f.max_iters.unwrap_or(e.max_iters);
    if f.no_debias {
        e.debias = false;
    }
}

fn apply_bootstrap(cfg: &mut ExperimentConfig, f: &BootstrapFlags) {
    if let Some(b) = f.backend {
        cfg.backend = b;
    }
    if let Some(l) = f.law {
        cfg.bootstrap.law = l;
    }
    if let Some(j) = f.replicates {
        cfg.bootstrap.replicates = j;
    }
    if !f.alpha.is_empty() {
        cfg.alphas = f.alpha.clone();
    }
}

/// Prints `csv`/`json` per the flags and mirrors both into `--out`.
fn emit(common: &Common, stem: &str, csv: &str, json: &str) -> Result<()> {
    if let Some(dir) = &common.out {
        write_text(dir, &format!("{stem}.csv"), csv)?;
        write_text(dir, &format!("{stem}.json"), json)?;
    }
    if common.csv || !common.json {
        print!("{csv}");
    }
    if common.json {
        print!("{json}");
    }
    Ok(())
}

fn read_measure(p: &Path) -> Result<AnyMeasure> {
    AnyMeasure::read(p).map_err(|e| match e {
        Error::Io(io) => Error::InvalidConfig(format!("{}: {io}", p.display())),
        other => other,
    })
}

fn parse_resolution(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidConfig(format!("resolution '{s}' is not N or HxW"));
    match s.split_once(['x', 'X']) {
        Some((h, w)) => Ok((h.parse().map_err(|_| bad())?, w.parse().map_err(|_| bad())?)),
        None => {
            let n = s.parse().map_err(|_| bad())?;
            Ok((n, n))
        }
    }
}

fn write_frames(common: &Common, frames: &[AnyMeasure]) -> Result<()> {
    match &common.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for (i, f) in frames.iter().enumerate() {
                f.write(&dir.join(format!("frame_{i:04}.json")))?;
            }
            eprintln!("wrote {} frames to {}", frames.len(), dir.display());
        }
        None => {
            let values: Vec<_> = frames.iter().map(AnyMeasure::to_json_value).collect();
            print!("{}", to_json(&values));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let mut cfg = load_config(common)?;
    match cli.command {
        Command::W2 {
            backend,
            a,
            b,
            entropic,
        } => {
            apply_entropic(&mut cfg, &entropic);
            let kind = backend.unwrap_or(cfg.backend);
            let d = w2_any(kind, &read_measure(&a)?, &read_measure(&b)?, &cfg.entropic.backend()?)?;
            let json = to_json(&serde_json::json!({ "backend": kind, "distance": d }));
            let csv = format!("distance\n{}\n", fmt_float(d));
            if let Some(dir) = &common.out {
                write_text(dir, "w2.json", &json)?;
                write_text(dir, "w2.csv", &csv)?;
            }
            if common.json {
                print!("{json}");
            } else if common.csv {
                print!("{csv}");
            } else {
                println!("{}", fmt_float(d));
            }
        }
        Command::Barycenter {
            backend,
            weights,
            files,
            entropic,
        } => {
            apply_entropic(&mut cfg, &entropic);
            let kind = backend.unwrap_or(cfg.backend);
            let measures = files.iter().map(|p| read_measure(p)).collect::<Result<Vec<_>>>()?;
            let w = (!weights.is_empty()).then_some(weights.as_slice());
            let bary = barycenter_any(kind, &measures, w, &cfg.entropic.backend()?)?;
            match &common.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    bary.write(&dir.join("barycenter.json"))?;
                }
                None => println!("{}", bary.to_json()),
            }
        }
        Command::Confset {
            boot,
            runs,
            n,
            entropic,
        } => {
            apply_bootstrap(&mut cfg, &boot);
            apply_entropic(&mut cfg, &entropic);
            if let Some(r) = runs {
                cfg.runs = r;
            }
            if !n.is_empty() {
                cfg.sample_sizes = n;
            }
            let report = run_confset_experiment(&cfg)?;
            emit(common, "confset", &to_csv(&report.rows), &to_json(&report))?;
        }
        Command::Cpdetect {
            boot,
            h,
            length,
            t_star,
            train_len,
            stride,
            entropic,
        } => {
            apply_bootstrap(&mut cfg, &boot);
            apply_entropic(&mut cfg, &entropic);
            let cp = &mut cfg.changepoint;
            cp.h = h.unwrap_or(cp.h);
            cp.length = length.unwrap_or(cp.length);
            cp.t_star = t_star.unwrap_or(cp.t_star);
            cp.train_len = train_len.unwrap_or(cp.train_len);
            cp.stride_mode = stride.unwrap_or(cp.stride_mode);
            let report = run_cpdetect(&cfg)?;
            match report.first_alarm {
                Some(t) => eprintln!("threshold {} — first alarm at t = {t}", fmt_float(report.threshold)),
                None => eprintln!("threshold {} — no alarm", fmt_float(report.threshold)),
            }
            emit(common, "cpdetect", &to_csv(&report.records), &to_json(&report))?;
        }
        Command::Gen {
            kind,
            n,
            resolution,
            shift,
            dilation,
            t_star,
            to,
        } => {
            if n == 0 {
                return Err(Error::InvalidConfig("--n must be at least 1".into()));
            }
            let frames: Vec<AnyMeasure> = if kind.eq_ignore_ascii_case("scatter") {
                let section = match &cfg.data {
                    DataSection::Scatter(s) => s.clone(),
                    _ => ScatterSection::default(),
                };
                let spec = section.spec().map_err(|e| Error::InvalidConfig(e.to_string()))?;
                sample_commuting(&spec, n, cfg.seed)?
                    .into_iter()
                    .map(AnyMeasure::Commuting)
                    .collect()
            } else {
                let template: TemplateKind = kind.parse()?;
                let (h, w) = match resolution {
                    Some(r) => parse_resolution(&r)?,
                    None => (
                        ImageTemplateSpec::DEFAULT_RESOLUTION,
                        ImageTemplateSpec::DEFAULT_RESOLUTION,
                    ),
                };
                let make = |k| {
                    ImageTemplateSpec::new(k, h, w).with_deformation(
                        shift.unwrap_or(ImageTemplateSpec::DEFAULT_SHIFT),
                        dilation.unwrap_or(ImageTemplateSpec::DEFAULT_DILATION),
                    )
                };
                let spec = make(template);
                spec.validate().map_err(|e| Error::InvalidConfig(e.to_string()))?;
                let frames = match (t_star, to) {
                    (Some(t), Some(k)) => render_stream_with_break(&spec, &make(k), t, n, cfg.seed)?,
                    _ => render_sample(&spec, n, cfg.seed)?,
                };
                frames.into_iter().map(AnyMeasure::Grid).collect()
            };
            write_frames(common, &frames)?;
        }
    }
    Ok(())
}

fn init_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var("WBARY_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("WBARY_THREADS must be a positive integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
