use std::io;

use thiserror::Error;

/// Errors produced by the linking pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("annotations overlap: [{first_start}, {first_end}) and [{second_start}, {second_end})")]
    Overlap {
        first_start: usize,
        first_end: usize,
        second_start: usize,
        second_end: usize,
    },
    #[error("invalid annotation [{start}, {end}) on a document of {len} tokens: {reason}")]
    InvalidAnnotation {
        start: usize,
        end: usize,
        len: usize,
        reason: &'static str,
    },
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("document text contains markup delimiter {ch:?} at byte {offset}")]
    DelimiterInText { ch: char, offset: usize },
    #[error("malformed markup at byte {offset}: {reason}")]
    MalformedMarkup { offset: usize, reason: &'static str },
    #[error("character span [{start}, {end}) does not align with token boundaries")]
    MisalignedSpan { start: usize, end: usize },
    #[error("duplicate entity title `{0}`")]
    DuplicateTitle(String),
    #[error("invalid knowledge-base entry: {0}")]
    InvalidEntry(String),
    #[error("training example has an empty target (prompt length {prompt_len} == sequence length)")]
    EmptyTarget { prompt_len: usize },
    #[error("invalid training example: {0}")]
    InvalidExample(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("negative set overlaps the gold set at entity {0}")]
    GoldNegativeOverlap(usize),
    #[error("negative pool too small: requested {requested}, available {available}")]
    InsufficientPool { requested: usize, available: usize },
    #[error("token {0:?} is outside the scorer vocabulary")]
    Vocabulary(String),
    #[error("no candidate available for {0}")]
    EmptyChoice(&'static str),
    #[error("internal decoder state error: {0}")]
    InternalState(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Overlap { .. } => "OverlapError",
            Error::InvalidAnnotation { .. } => "InvalidAnnotationError",
            Error::UnknownEntity(_) => "UnknownEntityError",
            Error::DelimiterInText { .. } => "DelimiterInTextError",
            Error::MalformedMarkup { .. } => "MalformedMarkupError",
            Error::MisalignedSpan { .. } => "MisalignedSpanError",
            Error::DuplicateTitle(_) => "DuplicateTitleError",
            Error::InvalidEntry(_) => "InvalidEntryError",
            Error::EmptyTarget { .. } => "EmptyTargetError",
            Error::InvalidExample(_) => "InvalidExampleError",
            Error::DimMismatch { .. } => "DimMismatchError",
            Error::GoldNegativeOverlap(_) => "GoldNegativeOverlapError",
            Error::InsufficientPool { .. } => "InsufficientPoolError",
            Error::Vocabulary(_) => "VocabularyError",
            Error::EmptyChoice(_) => "EmptyChoiceError",
            Error::InternalState(_) => "InternalStateError",
            Error::Config(_) => "ConfigError",
            Error::Format(_) => "FormatError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
