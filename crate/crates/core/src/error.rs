use thiserror::Error;

use crate::gauss_ot::BarycenterSolveReport;

/// Error type shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (entry ({row}, {col}) differs by {gap:e})")]
    NonSymmetric { row: usize, col: usize, gap: f64 },

    #[error("matrix is indefinite: minimum eigenvalue {min_eig:e} below tolerance {tol:e}")]
    IndefiniteInput { min_eig: f64, tol: f64 },

    #[error("matrix is singular: minimum eigenvalue {min_eig:e} below floor {floor:e}")]
    SingularInput { min_eig: f64, floor: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("barycenter fixed point did not converge: {0:?}")]
    FixedPointNoConvergence(BarycenterSolveReport),

    #[error(
        "Sinkhorn did not converge after {iterations} iterations (marginal error {marginal_err:e}, best cost {cost:e})"
    )]
    SinkhornNoConvergence {
        iterations: usize,
        cost: f64,
        marginal_err: f64,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("grid shape mismatch: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),

    #[error("empty input")]
    EmptyInput,

    #[error("measures do not share an eigenbasis")]
    BasisMismatch,

    #[error("basis is not orthonormal (deviation {0:e})")]
    NonOrthonormalBasis(f64),

    #[error("distribution does not sum to one (sum = {0})")]
    NotNormalized(f64),

    #[error("measure has no mass")]
    ZeroMass,

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("all weights are zero")]
    AllZeroWeights,

    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("bootstrap weights degenerate after {attempts} redraws")]
    DegenerateWeights { attempts: usize },

    #[error("weight law {0} is not supported by the {1} backend")]
    UnsupportedWeightLaw(&'static str, &'static str),

    #[error("measure representation does not match the {0} backend")]
    BackendMismatch(&'static str),

    #[error("window at t = {t} with half-width {h} does not fit a stream of length {len}")]
    WindowOutOfRange { t: usize, h: usize, len: usize },

    #[error("stream of length {len} is shorter than a full window of {needed}")]
    StreamTooShort { len: usize, needed: usize },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("deformation pushed all mass outside the frame")]
    EmptyRender,

    #[error("bad magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("file truncated: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("image {index} has no mass")]
    ZeroImage { index: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// True for failures of a numerical routine, as opposed to bad input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IndefiniteInput { .. }
                | Error::SingularInput { .. }
                | Error::NoConvergence { .. }
                | Error::FixedPointNoConvergence(_)
                | Error::SinkhornNoConvergence { .. }
                | Error::DegenerateWeights { .. }
                | Error::EmptyRender
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
