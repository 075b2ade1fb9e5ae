use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value out of range: {0}")]
    Range(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("lookup failed: {0}")]
    Lookup(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unsupported document version or value: {0}")]
    Version(String),

    /// A transform's precondition does not hold. `step` is set when the
    /// failure happened inside a multi-step recipe.
    #[error("{transform} not applicable{}: {reason}", step.map(|s| format!(" (step {s})")).unwrap_or_default())]
    Applicability {
        transform: String,
        reason: String,
        step: Option<usize>,
    },

    #[error("binding error: {0}")]
    Binding(String),

    #[error("read of uninitialized transient {container} at index {index:?}")]
    UninitializedRead { container: String, index: Vec<i64> },

    #[error("codegen error: {0}")]
    Codegen(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn not_applicable(transform: &str, reason: impl Into<String>) -> Self {
        Error::Applicability {
            transform: transform.to_string(),
            reason: reason.into(),
            step: None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
