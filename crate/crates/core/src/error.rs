use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field holds a value outside its domain.
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    /// Two inputs that must agree do not (e.g. runs aggregated across different configs).
    #[error("mismatch: {0}")]
    Mismatch(String),

    /// A caller broke an engine contract, such as submitting two intents for one agent.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    /// A sweep stopped because one of its runs failed.
    #[error("sweep aborted after {} of {total} cells completed: {source}", completed.len())]
    SweepAborted {
        completed: Vec<String>,
        total: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }
}
