use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The input data is wrong or insufficient.
    Data,
    /// The caller asked for something malformed (bad flag, config, template, path).
    Usage,
    /// A remote model failed or answered outside its contract.
    Backend,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("no replies: PONOS is undefined for zero reactions")]
    NoReplies,

    #[error("all weights are zero")]
    ZeroWeight,

    #[error("invalid weight {0}: weights must be finite and non-negative")]
    InvalidWeight(f64),

    #[error("invalid timestamp: reply time {reply_time} is after reference time {reference_time}")]
    InvalidTimestamp { reply_time: i64, reference_time: i64 },

    #[error("invalid lambda {0}: must be finite and non-negative")]
    InvalidLambda(f64),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionError { expected: usize, actual: usize },

    #[error("zero vector for {0}")]
    ZeroVector(String),

    #[error("duplicate id {0}")]
    DuplicateId(String),

    #[error("template error: {0}")]
    TemplateError(String),

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("unparseable label: {0}")]
    UnparseableLabel(String),

    #[error("missing gold labels for reply {0}")]
    MissingGold(String),

    #[error("generation incomplete: obtained {obtained} of {requested} replies")]
    GenerationIncomplete { obtained: usize, requested: usize },

    #[error("shape error: {0}")]
    ShapeError(String),

    #[error("join error: unmatched ids {0:?}")]
    JoinError(Vec<String>),

    #[error("variant mismatch: {0}")]
    VariantMismatch(String),

    #[error("missing content: {0}")]
    MissingContent(String),

    #[error("corrupt corpus: {failed} of {total} lines failed to parse")]
    CorruptCorpus { failed: usize, total: usize },

    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },

    #[error("invalid content: {0}")]
    InvalidContent(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(message: impl Into<String>) -> Self {
        Error::Parse { line: None, message: message.into() }
    }

    pub(crate) fn parse_at(line: usize, message: impl Into<String>) -> Self {
        Error::Parse { line: Some(line), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Variant name, printed by front ends next to the message.
    pub fn name(&self) -> &'static str {
        match self {
            Error::EmptyInput(_) => "EmptyInput",
            Error::NoReplies => "NoReplies",
            Error::ZeroWeight => "ZeroWeight",
            Error::InvalidWeight(_) => "InvalidWeight",
            Error::InvalidTimestamp { .. } => "InvalidTimestamp",
            Error::InvalidLambda(_) => "InvalidLambda",
            Error::DimensionError { .. } => "DimensionError",
            Error::ZeroVector(_) => "ZeroVector",
            Error::DuplicateId(_) => "DuplicateId",
            Error::TemplateError(_) => "TemplateError",
            Error::BackendUnavailable(_) => "BackendUnavailable",
            Error::UnparseableLabel(_) => "UnparseableLabel",
            Error::MissingGold(_) => "MissingGold",
            Error::GenerationIncomplete { .. } => "GenerationIncomplete",
            Error::ShapeError(_) => "ShapeError",
            Error::JoinError(_) => "JoinError",
            Error::VariantMismatch(_) => "VariantMismatch",
            Error::MissingContent(_) => "MissingContent",
            Error::CorruptCorpus { .. } => "CorruptCorpus",
            Error::Parse { .. } => "ParseError",
            Error::InvalidContent(_) => "InvalidContent",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Io { .. } => "IoError",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::BackendUnavailable(_)
            | Error::UnparseableLabel(_)
            | Error::GenerationIncomplete { .. } => ErrorClass::Backend,
            Error::TemplateError(_) | Error::InvalidConfig(_) | Error::Io { .. } => {
                ErrorClass::Usage
            }
            _ => ErrorClass::Data,
        }
    }
}
