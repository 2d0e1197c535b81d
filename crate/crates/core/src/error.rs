use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("scaling graph has a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("value {value} outside the open unit interval in {context}")]
    Domain { context: &'static str, value: f64 },

    #[error("non-finite value in {context} (layer {layer})")]
    Numeric { context: &'static str, layer: usize },

    #[error("episode {episode}: {source}")]
    Episode {
        episode: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("batch is empty")]
    EmptyBatch,

    #[error("space has {count} configurations, over the limit of {limit}")]
    TooLarge { count: String, limit: u128 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_episode(self, episode: usize) -> Self {
        match self {
            e @ Error::Episode { .. } => e,
            e => Error::Episode {
                episode,
                source: Box::new(e),
            },
        }
    }
}
