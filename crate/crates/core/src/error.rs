use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Broad failure classes. The command-line front end maps these onto exit
/// codes, so every [`Error`] variant belongs to exactly one of them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Input,
    Capability,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: malformed XML: {message}")]
    Xml { path: PathBuf, line: u32, message: String },

    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty adaptation corpus")]
    EmptyCorpus,

    #[error("input of {len} subtokens exceeds the encoder limit of {limit}")]
    TooLong { len: usize, limit: usize },

    #[error("layer {layer} out of range for a {depth}-layer encoder")]
    LayerOutOfRange { layer: usize, depth: usize },

    #[error("attention matrix (layer {layer}, head {head}) row {row} sums to {sum:.6}, expected 1")]
    NotRowStochastic {
        layer: usize,
        head: usize,
        row: usize,
        sum: f64,
    },

    #[error("annotator tokens do not align with words at character offsets {offsets:?}")]
    Misaligned { offsets: Vec<usize> },

    #[error("dependency structure is not a tree: {0}")]
    NotATree(String),

    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),

    #[error("{backend} does not support {capability}")]
    Capability { backend: String, capability: &'static str },

    #[error("external backend: {0}")]
    External(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),

    /// An error reported once and shared by several consumers.
    #[error("{message}")]
    Shared { kind: ErrorKind, message: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Prefixes the message with where the error happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, past any added context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Context { source, .. } => source.kind(),
            Error::Shared { kind, .. } => *kind,
            Error::Io { .. } => ErrorKind::Io,
            Error::Xml { .. }
            | Error::Format { .. }
            | Error::Argument(_)
            | Error::Config(_)
            | Error::EmptyCorpus
            | Error::TooLong { .. }
            | Error::LayerOutOfRange { .. }
            | Error::Misaligned { .. }
            | Error::NotATree(_)
            | Error::DegenerateEmbedding(_) => ErrorKind::Input,
            Error::Capability { .. } => ErrorKind::Capability,
            Error::NotRowStochastic { .. } | Error::External(_) | Error::Consistency(_) => ErrorKind::Internal,
        }
    }

    pub fn is_capability(&self) -> bool {
        self.kind() == ErrorKind::Capability
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
