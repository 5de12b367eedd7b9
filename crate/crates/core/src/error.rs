use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid skeleton: {0}")]
    InvalidTopology(String),

    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),

    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("line {line}: expected {expected} channel values, found {found}")]
    ChannelMismatch { line: usize, expected: usize, found: usize },

    #[error("motion has no frames")]
    EmptyMotion,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("cluster model has no centroids")]
    EmptyModel,

    #[error("band {band} cannot connect sequences of length {len_a} and {len_b}")]
    BandInfeasible { band: usize, len_a: usize, len_b: usize },

    #[error("unknown vocabulary item {0:?}")]
    UnknownVocab(String),

    #[error("empty corpus: no .bvh files found")]
    EmptyCorpus,

    #[error("{}: {source}", path.display())]
    Corpus {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported version {found:?} (expected {expected:?})")]
    VersionMismatch { found: String, expected: String },

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("empty input")]
    EmptyInput,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Error {
        Error::Corpus { path: path.into(), source: Box::new(self) }
    }

    /// The innermost error, looking through [`Error::Corpus`] wrappers.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::Corpus { source, .. } => source.root_cause(),
            other => other,
        }
    }
}
