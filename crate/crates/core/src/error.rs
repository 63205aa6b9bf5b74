use std::path::PathBuf;

/// Errors produced by the engine.
///
/// Variants are split into input problems (malformed files, inconsistent
/// data, bad configuration) and internal problems; see [`Error::is_input`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed corpus file: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("corpus validation failed: {0}")]
    Validation(String),

    #[error("duplicate document id `{0}`")]
    DuplicateDocument(String),

    #[error("bad magic in {what}: expected {expected:?}, found {found:?}")]
    BadMagic {
        what: &'static str,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("unsupported {what} version {found}")]
    UnsupportedVersion { what: &'static str, found: u16 },

    #[error("truncated {0}")]
    Truncated(&'static str),

    #[error("embedding dimension mismatch for `{doc_id}`: file uses {expected}, document has {found}")]
    DimensionMismatch {
        doc_id: String,
        expected: usize,
        found: usize,
    },

    #[error("embedding alignment mismatch for `{doc_id}`: {rows} rows for {tokens} tokens")]
    AlignmentMismatch { doc_id: String, rows: usize, tokens: usize },

    #[error("no embeddings for document `{0}`")]
    MissingEmbeddings(String),

    #[error("non-finite embedding value in `{0}`")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("span {start}..={end} out of range for `{doc_id}` ({len} tokens)")]
    SpanOutOfRange {
        doc_id: String,
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("too many candidates for exhaustive search: {0} (limit {1})")]
    TooLarge(usize, usize),

    #[error("{0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the error stems from user-supplied data rather than a bug.
    pub fn is_input(&self) -> bool {
        !matches!(self, Error::Internal(_) | Error::Shape(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
