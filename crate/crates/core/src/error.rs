use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid morphology: {0}")]
    InvalidMorphology(String),

    #[error("observation has {actual} joints, graph expects {expected}")]
    Factoring { expected: usize, actual: usize },

    #[error("missing output for joint node {0}")]
    Assembly(u32),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("environment: {0}")]
    Env(String),

    #[error("non-finite value at sample {index}: {what}")]
    Numerical { index: usize, what: String },

    #[error("trainer: {0}")]
    Trainer(String),

    #[error("rollout worker {index} failed: {source}")]
    Worker {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("incompatible morphology: {0}")]
    IncompatibleMorphology(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short stable tag used by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidMorphology(_) => "morphology",
            Error::Factoring { .. } => "factoring",
            Error::Assembly(_) => "assembly",
            Error::Shape(_) => "shape",
            Error::Config(_) => "config",
            Error::Env(_) => "env",
            Error::Numerical { .. } => "numerical",
            Error::Trainer(_) => "trainer",
            Error::Worker { .. } => "worker",
            Error::Checkpoint(_) => "checkpoint",
            Error::IncompatibleMorphology(_) => "incompatible-morphology",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
