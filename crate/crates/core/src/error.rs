use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    /// A file or payload that does not follow its declared format.
    #[error("{what}: line {line}: {message}")]
    Format {
        what: &'static str,
        line: usize,
        message: String,
    },

    /// Arguments that break an operation's precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("training data contains a single class")]
    SingleClass,

    #[error("degenerate model: weight vector has zero norm")]
    DegenerateModel,

    #[error("insufficient pairable data")]
    InsufficientPairableData,

    #[error("incomplete batch {batch_id}: worker {worker_id} answered {answered} of {expected} positions")]
    IncompleteBatch {
        batch_id: String,
        worker_id: String,
        answered: usize,
        expected: usize,
    },

    #[error("missing adjudication for {} tweet(s): {}", .0.len(), .0.join(", "))]
    MissingAdjudication(Vec<String>),

    #[error("unknown lexicon category {0:?}")]
    UnknownCategory(String),

    #[error("unknown time zone {0:?}")]
    UnknownZone(String),

    #[error("unknown POS tag {0:?}")]
    UnknownTag(String),

    #[error("rankings cover different id sets: {0}")]
    IdMismatch(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
