use alloc::string::String;

/// Errors produced by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("index {index} out of range for {what} (bound {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("class {class} of {axis} has zero prior")]
    AbsentClass { axis: &'static str, class: usize },
    #[error("language {language} has {found} speakers, at least {required} required")]
    NotEnoughSpeakers {
        language: String,
        found: usize,
        required: usize,
    },
    #[error("inconsistent family label at example {example}: got {got}, language {language} belongs to {expected}")]
    InconsistentFamily {
        example: usize,
        language: usize,
        expected: usize,
        got: usize,
    },
    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),
    #[error("snapshot shape does not match model")]
    SnapshotMismatch,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
