use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0}: only 2 and 3 are supported")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected} coordinates, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("sensor index {index} out of range for an array of {len} sensors")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("need at least {required} sensors, found {found}")]
    TooFewSensors { required: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Fisher information is numerically singular; the source cannot be
    /// localized from this geometry.
    #[error("source not localizable: {0}")]
    NotLocalizable(String),

    #[error("ill-conditioned normal equations (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    /// The augmented moment matrix used for noise-variance estimation is not
    /// positive definite.
    #[error("insufficient geometry for variance estimation: {0}")]
    InsufficientGeometry(String),

    #[error("degenerate Schur complement (determinant {c1:.3e})")]
    SchurDegenerate { c1: f64 },

    #[error("no admissible variance root among {roots:?} (sign-condition values {sign_values:?})")]
    NoAdmissibleRoot {
        roots: Vec<f64>,
        sign_values: Vec<f64>,
    },

    #[error("variance root failed verification: |lambda_max - 1| = {residual:.3e}")]
    VarianceVerification { residual: f64 },

    #[error("rank-deficient Gauss-Newton system (condition number {condition:.3e}); retry with damping")]
    RankDeficientJacobian { condition: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// True for failures of the numerical pipeline, as opposed to bad input
    /// or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateGeometry(_)
                | Error::NotLocalizable(_)
                | Error::IllConditioned { .. }
                | Error::InsufficientGeometry(_)
                | Error::SchurDegenerate { .. }
                | Error::NoAdmissibleRoot { .. }
                | Error::VarianceVerification { .. }
                | Error::RankDeficientJacobian { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
