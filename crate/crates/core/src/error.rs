use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate doc_id {0}")]
    DuplicateDocId(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty query")]
    EmptyQuery,
    #[error("document {0} has no tokens")]
    EmptyDocument(String),

    #[error("aspect contains bracket")]
    AspectContainsBracket,
    #[error("no aspects parsed")]
    NoAspectsParsed,
    #[error("malformed aspect string")]
    MalformedAspects,
    #[error("prompt template must contain exactly one {{query}} placeholder, found {0}")]
    BadPromptTemplate(usize),
    #[error("invalid log-probability {0}")]
    InvalidLogProb(f64),

    #[error("degenerate sub-answers")]
    DegenerateSubAnswers,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("no candidates available")]
    NoCandidates,
    #[error("k exceeds pool (k={k}, pool={pool})")]
    KExceedsPool { k: usize, pool: usize },
    #[error("masked docid in sequence: {0}")]
    MaskedDocid(usize),
    #[error("docid {0} is not a valid pool index")]
    InvalidDocid(usize),

    #[error("unilaterality violated: expected exactly one greedy list, found {0}")]
    UnilateralityViolated(usize),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("artifact {path} was produced with config {found}, current config is {expected}")]
    FingerprintMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("schema error in record {record}: {message}")]
    Schema { record: String, message: String },
    #[error("stage {stage} failed on record {record}: {source}")]
    Stage {
        stage: String,
        record: String,
        #[source]
        source: Box<Error>,
    },

    #[error("transport error: {0}")]
    Transport(String),
    #[error("io error on {path}: {source}")]
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
