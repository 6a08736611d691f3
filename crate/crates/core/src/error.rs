use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time grid is not uniform at sample {index}")]
    NonUniformGrid { index: usize },

    #[error("time grid must have at least {min} samples, got {len}")]
    GridTooShort { len: usize, min: usize },

    #[error("time step {dt} fs exceeds the resolution limit {limit} fs (coherence time / 20)")]
    GridTooCoarse { dt: f64, limit: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("lag {lag} fs exceeds the grid span {span} fs")]
    LagOutOfRange { lag: f64, span: f64 },

    #[error("need at least {min} realizations, got {got}")]
    TooFewRealizations { got: usize, min: usize },

    #[error("realization sets differ: {0}")]
    EnsembleMismatch(String),

    #[error("envelope sample has modulus {modulus}, expected 1")]
    InvalidEnvelope { modulus: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("step too large: dt * |H| = {product:.3} exceeds 0.5 (dt = {dt} fs, |H| = {norm} rad/fs)")]
    StepTooLarge { dt: f64, norm: f64, product: f64 },

    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("steady state is not unique: {0}")]
    NonUniqueSteadyState(String),

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("output file {0} already exists (pass --overwrite to replace it)")]
    OutputExists(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures raised by a numerical guard (step size, coarse grid,
    /// invalid state) as opposed to bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::StepTooLarge { .. }
            | Error::GridTooCoarse { .. }
            | Error::InvalidEnvelope { .. }
            | Error::InvalidDensityMatrix(_) => true,
            Error::Trajectory { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::InvalidParameter { .. }
                | Error::UnknownPreset(_)
                | Error::OutputExists(_)
                | Error::NonUniformGrid { .. }
                | Error::GridTooShort { .. }
                | Error::NonUniqueSteadyState(_)
        )
    }
}
