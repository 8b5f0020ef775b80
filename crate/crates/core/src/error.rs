use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the planning pipeline.
#[derive(Debug, Error)]
pub enum NbvError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("infeasible model: {points} points cannot support {components} components")]
    InfeasibleModel { points: usize, components: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no candidate lies in an admissible partition")]
    ConstraintInfeasible,

    #[error("first observation produced no occupied voxels")]
    EmptyFirstObservation,

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = NbvError> = std::result::Result<T, E>;

impl NbvError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NbvError::Io {
            path: path.into(),
            source,
        }
    }
}
