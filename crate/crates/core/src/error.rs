use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A model input failed validation. `field` names the offending input.
    #[error("invalid configuration: {field}: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The chain does not have the structure an operation requires
    /// (reducible generator, singular complement system, ...).
    #[error("structural error: {0}")]
    Structural(String),

    #[error("fold-back theorem not applicable: {0}")]
    TheoremInapplicable(String),

    #[error("state space has {states} states, over the cap of {cap}; try a smaller cluster or fewer rates")]
    Capacity { states: usize, cap: usize },
}

impl Error {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
