//! TOML experiment configuration. Every section has defaults; unknown keys are errors.
//!
//! ```toml
//! backend = "commuting"
//! seed = 7
//! runs = 200
//! sample_sizes = [5, 40]
//! alphas = [0.05, 0.01]
//!
//! [bootstrap]
//! law = "poisson1"
//! replicates = 2000
//!
//! [data]
//! source = "scatter"
//! dim = 4
//! mean_noise = 0.2
//! eig_noise = 0.2
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::EntropicBackend;
use crate::bootstrap::{BootstrapConfig, WeightLaw};
use crate::changepoint::{StrideMode, WindowConfig};
use crate::datagen::{random_orthonormal_basis, ImageTemplateSpec, ScatterLocationSpec, TemplateKind};
use crate::entropic::EntropicConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Commuting,
    Gaussian,
    Entropic,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Commuting => "commuting",
            BackendKind::Gaussian => "gaussian",
            BackendKind::Entropic => "entropic",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "commuting" => Ok(BackendKind::Commuting),
            "gaussian" => Ok(BackendKind::Gaussian),
            "entropic" => Ok(BackendKind::Entropic),
            other => Err(Error::InvalidConfig(format!("unknown backend '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub law: WeightLaw,
    pub replicates: usize,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self {
            law: WeightLaw::Poisson1,
            replicates: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropicSection {
    pub gamma: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Subtract the self-transport terms from the Sinkhorn cost.
    pub debias: bool,
}

impl Default for EntropicSection {
    fn default() -> Self {
        let d = EntropicConfig::<f64>::default();
        Self {
            gamma: d.gamma,
            tol: d.tol,
            max_iters: d.max_iters,
            debias: true,
        }
    }
}

impl EntropicSection {
    pub fn backend(&self) -> Result<EntropicBackend<f64>> {
        let cfg = EntropicConfig::new(self.gamma, self.max_iters, self.tol)?;
        Ok(EntropicBackend {
            cfg,
            debias: self.debias,
        })
    }
}

/// Commuting location-scatter law; the alternative moves the mean by
/// `alternative_shift · mean_noise` along the first coordinate axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScatterSection {
    pub dim: usize,
    /// Defaults to the origin.
    pub template_mean: Option<Vec<f64>>,
    /// Defaults to `1, 1.5, 2, …`.
    pub template_sqrt_eigs: Option<Vec<f64>>,
    pub basis_seed: u64,
    pub mean_noise: f64,
    pub eig_noise: f64,
    pub alternative_shift: f64,
}

impl Default for ScatterSection {
    fn default() -> Self {
        Self {
            dim: 4,
            template_mean: None,
            template_sqrt_eigs: None,
            basis_seed: 0,
            mean_noise: 0.2,
            eig_noise: 0.2,
            alternative_shift: 3.0,
        }
    }
}

impl ScatterSection {
    pub fn spec(&self) -> Result<ScatterLocationSpec<f64>> {
        let d = self.dim;
        let mean = self.template_mean.clone().unwrap_or_else(|| vec![0.0; d]);
        let eigs = self
            .template_sqrt_eigs
            .clone()
            .unwrap_or_else(|| (0..d).map(|k| 1.0 + 0.5 * k as f64).collect());
        let basis = Arc::new(random_orthonormal_basis(d, self.basis_seed));
        ScatterLocationSpec::new(mean, eigs, basis, self.mean_noise, self.eig_noise)
    }

    pub fn alternative_spec(&self) -> Result<ScatterLocationSpec<f64>> {
        let mut spec = self.spec()?;
        spec.template_mean[0] += self.alternative_shift * self.mean_noise;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageSection {
    pub template: TemplateKind,
    pub alternative: TemplateKind,
    pub height: usize,
    pub width: usize,
    pub shift_range: f64,
    pub dilation_range: f64,
}

impl Default for ImageSection {
    fn default() -> Self {
        Self {
            template: TemplateKind::ConcentricCircles,
            alternative: TemplateKind::Ellipse,
            height: ImageTemplateSpec::DEFAULT_RESOLUTION,
            width: ImageTemplateSpec::DEFAULT_RESOLUTION,
            shift_range: ImageTemplateSpec::DEFAULT_SHIFT,
            dilation_range: ImageTemplateSpec::DEFAULT_DILATION,
        }
    }
}

impl ImageSection {
    fn make(&self, kind: TemplateKind) -> ImageTemplateSpec {
        ImageTemplateSpec::new(kind, self.height, self.width).with_deformation(self.shift_range, self.dilation_range)
    }

    pub fn spec(&self) -> ImageTemplateSpec {
        self.make(self.template)
    }

    pub fn alternative_spec(&self) -> ImageTemplateSpec {
        self.make(self.alternative)
    }
}

/// IDX image/label pair; samples of `digit` are drawn without replacement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistSection {
    pub images: PathBuf,
    pub labels: PathBuf,
    pub digit: u8,
    pub alternative: u8,
    /// Images set aside to form the reference barycenter of each digit.
    #[serde(default = "default_reference_size")]
    pub reference_size: usize,
}

fn default_reference_size() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSection {
    Scatter(ScatterSection),
    Images(ImageSection),
    Mnist(MnistSection),
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection::Scatter(ScatterSection::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChangepointSection {
    pub h: usize,
    /// Length `M` of the scanned stream.
    pub length: usize,
    /// First post-break frame (1-based).
    pub t_star: usize,
    /// Length of the separate homogeneous training stream.
    pub train_len: usize,
    pub stride_mode: StrideMode,
}

impl Default for ChangepointSection {
    fn default() -> Self {
        Self {
            h: 5,
            length: 80,
            t_star: 40,
            train_len: 20,
            stride_mode: StrideMode::Sliding,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub backend: BackendKind,
    pub seed: u64,
    pub runs: usize,
    pub sample_sizes: Vec<usize>,
    pub alphas: Vec<f64>,
    pub bootstrap: BootstrapSection,
    pub data: DataSection,
    pub changepoint: ChangepointSection,
    pub entropic: EntropicSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Commuting,
            seed: 0,
            runs: 100,
            sample_sizes: vec![40],
            alphas: vec![0.05],
            bootstrap: BootstrapSection::default(),
            data: DataSection::default(),
            changepoint: ChangepointSection::default(),
            entropic: EntropicSection::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn bootstrap_config(&self, seed: u64, alpha: f64) -> Result<BootstrapConfig> {
        BootstrapConfig::new(self.bootstrap.law, self.bootstrap.replicates, seed, alpha)
    }

    pub fn window_config(&self) -> Result<WindowConfig> {
        WindowConfig::new(self.changepoint.h, self.changepoint.stride_mode, self.alphas[0])
    }

    /// Checks every field, including the ones only some experiments read.
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(invalid("runs must be at least 1"));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(invalid("sample_sizes must be a nonempty list of positive sizes"));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(invalid("alphas must be a nonempty list of values in (0, 1)"));
        }
        if self.bootstrap.replicates == 0 {
            return Err(invalid("bootstrap.replicates must be at least 1"));
        }
        self.entropic.backend()?;
        let grid_data = !matches!(self.data, DataSection::Scatter(_));
        if grid_data != (self.backend == BackendKind::Entropic) {
            return Err(invalid(format!(
                "backend '{}' cannot process '{}' data",
                self.backend,
                match self.data {
                    DataSection::Scatter(_) => "scatter",
                    DataSection::Images(_) => "images",
                    DataSection::Mnist(_) => "mnist",
                }
            )));
        }
        if !self.bootstrap.law.is_nonnegative() && self.backend != BackendKind::Commuting {
            return Err(Error::UnsupportedWeightLaw(
                self.bootstrap.law.name(),
                self.backend.name(),
            ));
        }
        match &self.data {
            DataSection::Scatter(s) => {
                s.spec().map_err(|e| invalid(e.to_string()))?;
                if !(s.alternative_shift >= 0.0) {
                    return Err(invalid("alternative_shift must be nonnegative"));
                }
            }
            DataSection::Images(s) => {
                s.spec().validate().map_err(|e| invalid(e.to_string()))?;
            }
            DataSection::Mnist(s) => {
                if s.reference_size == 0 {
                    return Err(invalid("mnist.reference_size must be at least 1"));
                }
            }
        }
        let cp = &self.changepoint;
        if cp.h == 0 {
            return Err(invalid("changepoint.h must be at least 1"));
        }
        if cp.length < 2 * cp.h || cp.train_len < 2 * cp.h {
            return Err(invalid(
                "changepoint.length and train_len must hold a full window of 2h frames",
            ));
        }
        if cp.t_star == 0 || cp.t_star > cp.length {
            return Err(invalid("changepoint.t_star must lie in 1..=length"));
        }
        Ok(())
    }
}
