use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("recording of {duration_s} s is shorter than one {window_s} s analysis window")]
    DurationTooShort { duration_s: f64, window_s: f64 },

    #[error("recording has no subcarriers")]
    NoSubcarriers,

    #[error("series has zero variance")]
    DegenerateSeries,

    #[error("window [{start_s}, {start_s} + {window_s}] s lies outside a {duration_s} s recording")]
    WindowOutOfRange {
        start_s: f64,
        window_s: f64,
        duration_s: f64,
    },

    #[error("every motion statistic is non-positive")]
    AllStatic,

    #[error("samples belong to different classes ({0} vs {1})")]
    ClassMismatch(String, String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite activation in {0}")]
    NonFiniteActivation(String),

    #[error("non-finite gradient for {0}")]
    NonFiniteGradient(String),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}
