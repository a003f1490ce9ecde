//! Bootstrap confidence sets and change-point tests for 2-Wasserstein barycenters.
//!
//! The numerical core is generic over the scalar type (`f32` or `f64`, see
//! [`Scalar`]); the aliases at the crate root fix it to `f64`, which is what the
//! experiment drivers and the CLI use.
//!
//! Modules:
//! - [`linalg`]: symmetric eigendecomposition, matrix square roots.
//! - [`gauss_ot`]: closed-form W₂ geometry of Gaussian / commuting families.
//! - [`entropic`]: entropic transport and Bregman barycenters on pixel grids.
//! - [`backend`]: the barycenter/distance abstraction the statistics run on.
//! - [`bootstrap`]: multiplier-bootstrap quantiles and confidence sets.
//! - [`changepoint`]: rolling-window two-sample statistic and stream scanning.
//! - [`datagen`]: synthetic location-scatter samples and template images.
//! - [`io`]: IDX files, JSON measures, experiment configs and drivers.

// `!(x >= 0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backend;
pub mod bootstrap;
pub mod changepoint;
pub mod datagen;
pub mod entropic;
pub mod error;
pub mod gauss_ot;
pub mod io;
pub mod linalg;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` instantiations used by the drivers and the CLI.
pub type Matrix = linalg::Matrix<f64>;
pub type SpdMatrix = linalg::SpdMatrix<f64>;
pub type GaussianMeasure = gauss_ot::GaussianMeasure<f64>;
pub type CommutingMeasure = gauss_ot::CommutingMeasure<f64>;
pub type CommutingMoments = gauss_ot::CommutingMoments<f64>;
pub type DiscreteMeasure = entropic::DiscreteMeasure<f64>;
pub type EntropicConfig = entropic::EntropicConfig<f64>;
pub type EntropicBackend = backend::EntropicBackend<f64>;
pub type GridSummary = backend::GridSummary<f64>;
pub type QuantileEstimate = bootstrap::QuantileEstimate<f64>;
pub type DetectionReport = changepoint::DetectionReport<f64>;
pub type ScatterLocationSpec = datagen::ScatterLocationSpec<f64>;
