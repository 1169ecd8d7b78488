use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },

    #[error("event cap {cap} exceeded during simulation; influence parameters are likely supercritical")]
    Supercritical { cap: usize },

    #[error("event {event} has no spontaneous channel or parent candidate with positive weight")]
    DegenerateSupport { event: usize },

    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("no true edges to average over")]
    EmptySupport,

    #[error("AUC undefined: truth contains a single class")]
    SingleClass,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            why: why.into(),
        }
    }

    /// Process exit code for the CLI: 2 for data errors, 3 for
    /// numerical/degenerate conditions.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid { .. } | Error::Malformed { .. } | Error::ShapeMismatch(_) | Error::Io(_) => 2,
            Error::Supercritical { .. }
            | Error::DegenerateSupport { .. }
            | Error::EmptySupport
            | Error::SingleClass => 3,
        }
    }
}
