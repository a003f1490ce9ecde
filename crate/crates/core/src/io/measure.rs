//! JSON measure files and backend dispatch on runtime-typed measures.
//!
//! Formats (keys in this order on output):
//! - grid: `{"h": H, "w": W, "weights": [...]}` (row-major)
//! - commuting: `{"basis": [[...]], "mean": [...], "lambda": [...]}` (basis columns are eigenvectors)
//! - Gaussian: `{"mean": [...], "cov": [[...]]}`

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, EntropicBackend};
use crate::entropic::{bregman_barycenter, DiscreteMeasure};
use crate::error::{Error, Result};
use crate::gauss_ot::{
    barycenter_commuting, barycenter_fixed_point, normalize_nonnegative, w2_commuting, w2_gaussian, CommutingMeasure,
    GaussianMeasure,
};
use crate::io::config::BackendKind;
use crate::linalg::{Matrix, SpdMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum MeasureJson {
    Grid {
        h: usize,
        w: usize,
        weights: Vec<f64>,
    },
    Commuting {
        basis: Vec<Vec<f64>>,
        mean: Vec<f64>,
        lambda: Vec<f64>,
    },
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
}

/// A measure of any supported representation.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyMeasure {
    Grid(DiscreteMeasure<f64>),
    Commuting(CommutingMeasure<f64>),
    Gaussian(GaussianMeasure<f64>),
}

impl AnyMeasure {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyMeasure::Grid(_) => "grid",
            AnyMeasure::Commuting(_) => "commuting",
            AnyMeasure::Gaussian(_) => "gaussian",
        }
    }

    pub fn from_json_value(j: MeasureJson) -> Result<Self> {
        Ok(match j {
            MeasureJson::Grid { h, w, weights } => AnyMeasure::Grid(DiscreteMeasure::new(h, w, weights)?),
            MeasureJson::Commuting { basis, mean, lambda } => AnyMeasure::Commuting(CommutingMeasure::new(
                Arc::new(Matrix::from_rows(&basis)?),
                mean,
                lambda,
            )?),
            MeasureJson::Gaussian { mean, cov } => {
                AnyMeasure::Gaussian(GaussianMeasure::new(mean, SpdMatrix::new(Matrix::from_rows(&cov)?)?)?)
            }
        })
    }

    pub fn to_json_value(&self) -> MeasureJson {
        match self {
            AnyMeasure::Grid(m) => MeasureJson::Grid {
                h: m.height(),
                w: m.width(),
                weights: m.weights().to_vec(),
            },
            AnyMeasure::Commuting(m) => MeasureJson::Commuting {
                basis: m.basis().to_rows(),
                mean: m.mean().to_vec(),
                lambda: m.sqrt_eigs().to_vec(),
            },
            AnyMeasure::Gaussian(m) => MeasureJson::Gaussian {
                mean: m.mean().to_vec(),
                cov: m.cov().as_matrix().to_rows(),
            },
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_json_value(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_json_value()).expect("plain data serializes")
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        Ok(fs::write(path, self.to_json() + "\n")?)
    }

    fn grid(&self, backend: BackendKind) -> Result<&DiscreteMeasure<f64>> {
        match self {
            AnyMeasure::Grid(m) => Ok(m),
            _ => Err(Error::BackendMismatch(backend.name())),
        }
    }

    fn commuting(&self, backend: BackendKind) -> Result<&CommutingMeasure<f64>> {
        match self {
            AnyMeasure::Commuting(m) => Ok(m),
            _ => Err(Error::BackendMismatch(backend.name())),
        }
    }

    /// Commuting measures are Gaussians too.
    fn gaussian(&self, backend: BackendKind) -> Result<GaussianMeasure<f64>> {
        match self {
            AnyMeasure::Gaussian(m) => Ok(m.clone()),
            AnyMeasure::Commuting(m) => Ok(m.to_gaussian()),
            _ => Err(Error::BackendMismatch(backend.name())),
        }
    }
}

/// W₂ between two measures under `backend` (the entropic one reports its surrogate).
pub fn w2_any(backend: BackendKind, a: &AnyMeasure, b: &AnyMeasure, entropic: &EntropicBackend<f64>) -> Result<f64> {
    match backend {
        BackendKind::Commuting => w2_commuting(a.commuting(backend)?, b.commuting(backend)?),
        BackendKind::Gaussian => w2_gaussian(&a.gaussian(backend)?, &b.gaussian(backend)?),
        BackendKind::Entropic => {
            let (a, b) = (
                entropic.summarize(a.grid(backend)?)?,
                entropic.summarize(b.grid(backend)?)?,
            );
            entropic.distance(&a, &b)
        }
    }
}

/// Barycenter under `backend`; `raw_weights` (nonnegative) default to uniform.
pub fn barycenter_any(
    backend: BackendKind,
    measures: &[AnyMeasure],
    raw_weights: Option<&[f64]>,
    entropic: &EntropicBackend<f64>,
) -> Result<AnyMeasure> {
    if measures.is_empty() {
        return Err(Error::EmptyInput);
    }
    let raw = raw_weights
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![1.0; measures.len()]);
    if raw.len() != measures.len() {
        return Err(Error::DimensionMismatch {
            expected: measures.len(),
            found: raw.len(),
        });
    }
    let w = normalize_nonnegative(&raw)?;
    Ok(match backend {
        BackendKind::Commuting => {
            let ms = measures
                .iter()
                .map(|m| m.commuting(backend).cloned())
                .collect::<Result<Vec<_>>>()?;
            AnyMeasure::Commuting(barycenter_commuting(&ms, &w)?)
        }
        BackendKind::Gaussian => {
            let ms = measures
                .iter()
                .map(|m| m.gaussian(backend))
                .collect::<Result<Vec<_>>>()?;
            AnyMeasure::Gaussian(barycenter_fixed_point(&ms, &w)?.0)
        }
        BackendKind::Entropic => {
            let ms = measures
                .iter()
                .map(|m| m.grid(backend).cloned())
                .collect::<Result<Vec<_>>>()?;
            AnyMeasure::Grid(bregman_barycenter(&ms, &w, &entropic.cfg)?)
        }
    })
}
