use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of a special function or distribution.
    #[error("domain error in {func}: {detail}")]
    Domain { func: &'static str, detail: String },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid effect specification: {0}")]
    InvalidEffect(String),

    /// A solver could not reach its target inside the configured caps.
    #[error("unsatisfiable: {0}")]
    Unsatisfiable(String),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    NoConvergence(String),
}

impl Error {
    pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            func,
            detail: detail.into(),
        }
    }
}

/// Structural problems with a repeated-measures dataset.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("dataset has no groups")]
    Empty,

    #[error("need at least 2 time points, found {0}")]
    TooFewTimes(usize),

    #[error("group '{group}' subject '{subject}' has {found} measurements, expected {expected}")]
    RaggedRow {
        group: String,
        subject: String,
        expected: usize,
        found: usize,
    },

    #[error("group '{group}' subject '{subject}' is missing the value at time '{time}'")]
    MissingCell {
        group: String,
        subject: String,
        time: String,
    },

    #[error("group '{group}' has {found} subject(s); at least 2 are required")]
    TooFewSubjects { group: String, found: usize },

    #[error("group '{group}' rows have {found} time points but {expected} time labels were given")]
    MismatchedTimes {
        group: String,
        expected: usize,
        found: usize,
    },

    #[error("group '{group}' lists subject '{subject}' more than once")]
    DuplicateSubject { group: String, subject: String },

    #[error("group label '{0}' appears in more than one block")]
    DuplicateGroup(String),
}
