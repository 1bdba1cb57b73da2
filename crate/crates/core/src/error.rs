use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("episode {episode_id}: invalid {field}: {message}")]
    Validation {
        episode_id: String,
        field: &'static str,
        message: String,
    },

    #[error("no cell for policy {policy:?}, object {object:?}")]
    MissingCell { policy: String, object: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The statistic is undefined on the data (zero RMST, no events, ...).
    #[error("degenerate statistic: {0}")]
    Degenerate(String),

    #[error("statistic unstable under resampling: {undefined} of {total} replicates undefined")]
    Unstable { undefined: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures caused by the data being statistically degenerate
    /// rather than malformed.
    pub fn is_degeneracy(&self) -> bool {
        matches!(self, Error::Degenerate(_) | Error::Unstable { .. })
    }
}
