//! Files, configuration and the experiment drivers behind the CLI.

pub mod config;
pub mod experiments;
pub mod idx;
pub mod measure;
pub mod output;

pub use config::{BackendKind, DataSection, ExperimentConfig};
pub use experiments::{run_confset_experiment, run_cpdetect, ConfsetReport, ConfsetRow, CpdetectReport};
pub use idx::{load_idx_images, IdxImages};
pub use measure::{barycenter_any, w2_any, AnyMeasure};
