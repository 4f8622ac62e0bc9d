use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Line numbers are 1-based and refer to the input file being read.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: invalid UTF-8 input")]
    Encoding { line: usize },

    #[error("line {line}: {message}")]
    Structure { line: usize, message: String },

    #[error("corpus contains no tokens")]
    EmptyCorpus,

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("line {line}: invalid value {value:?}: {message}")]
    Value {
        line: usize,
        value: String,
        message: String,
    },

    #[error("ERR is undefined: no token in the gold corpus needs normalization")]
    UndefinedErr,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("marker collision: {0}")]
    MarkerCollision(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("replay cache has no entry for prompt {prompt_hash}")]
    CacheMiss { prompt_hash: String },

    #[error("no mapping for code points: {}", .0.join(", "))]
    Coverage(Vec<String>),

    #[error("cannot decode Latin text: {0}")]
    Decode(String),

    #[error("cannot segment {word:?}: no vocabulary entry matches at byte {offset}")]
    Segmentation { word: String, offset: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Read a whole file, attaching the path to any I/O error.
pub fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Decode UTF-8, reporting the line of the first invalid byte.
pub(crate) fn decode_utf8(input: &[u8]) -> Result<&str> {
    std::str::from_utf8(input).map_err(|e| {
        let valid = &input[..e.valid_up_to()];
        let line = valid.iter().filter(|&&b| b == b'\n').count() + 1;
        Error::Encoding { line }
    })
}
