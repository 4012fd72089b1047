use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("unknown token `{0}`")]
    UnknownToken(String),

    #[error("reserved token `{0}` inside a sentence")]
    ReservedInSentence(String),

    #[error("unknown source token `{0}`")]
    UnknownSourceToken(String),

    #[error("empty source sentence")]
    EmptySource,

    #[error("inconsistent trace: {0}")]
    InconsistentTrace(String),

    #[error("trace line {line}: {msg}")]
    TraceFormat { line: usize, msg: String },

    #[error("lexicon line {line}: {msg}")]
    Lexicon { line: usize, msg: String },

    #[error("lexicon: {0}")]
    InvalidLexicon(String),

    #[error("invalid order {0}: must be at least 1")]
    InvalidOrder(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("model file line {line}: {msg}")]
    ModelFormat { line: usize, msg: String },

    #[error("runaway decode: more than {limit} target tokens")]
    RunawayDecode { limit: usize },

    #[error("policy requested READ after the source was exhausted")]
    ReadPastEnd,

    #[error("predictor/vocabulary mismatch: predicted id {0} is not a source token")]
    PredictorMismatch(u32),

    #[error("empty output")]
    EmptyOutput,

    #[error("length mismatch: {hypotheses} hypotheses vs {references} references")]
    LengthMismatch { hypotheses: usize, references: usize },

    #[error("corpus mismatch: `{baseline}` vs `{speculative}`")]
    CorpusMismatch { baseline: String, speculative: String },

    #[error("sentence {index}: {source}")]
    Sentence {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{}: missing column `{column}`", file.display())]
    MissingColumn { file: PathBuf, column: String },

    #[error("no results found in {}", .0.display())]
    EmptyResults(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
