use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Two vectors or a vector and a model layout disagree on size.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// An argument or configuration value is outside its allowed range.
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    /// A non-finite value appeared in a parameter vector or loss.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Training produced a non-finite loss.
    #[error("training diverged: {context}")]
    Divergence { context: String },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }
}
