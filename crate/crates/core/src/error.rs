use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("unknown {kind} id `{id}`")]
    UnknownReference { kind: &'static str, id: String },

    #[error("health model: {0}")]
    Model(String),

    #[error("discretization not suitable: no grid point in the rounding cone of {0:?}")]
    NotSuitable(Vec<f64>),

    #[error("CEEG too large: {size} parameter values exceed the cap of {cap}")]
    CeegTooLarge { size: usize, cap: usize },

    #[error("solver backend `{backend}` failed: {message}")]
    Solver { backend: String, message: String },

    #[error("solution validation failed: {0}")]
    Validation(String),

    #[error("flow decomposition failed: {0}")]
    Decomposition(String),

    #[error("oracle guard exceeded: {0}")]
    OracleGuard(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
