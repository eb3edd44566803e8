use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("stalled download: bandwidth stays at zero after t={start}s with {remaining} Mb left")]
    StalledDownload { start: f64, remaining: f64 },

    #[error("trace format error at line {line}: {msg}")]
    TraceFormat { line: usize, msg: String },

    #[error("probability matrix error at line {line}: {msg}")]
    ProbFormat { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("oracle limit exceeded: {0}")]
    OracleCap(String),

    #[error("session stuck: {0}")]
    Stuck(String),

    #[error("{algorithm} trial {trial}: {source}")]
    Trial {
        algorithm: String,
        trial: usize,
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
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for errors caused by bad input rather than a failure at run time.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Validation(_)
            | Error::TraceFormat { .. }
            | Error::ProbFormat { .. }
            | Error::Config(_)
            | Error::Csv(_) => true,
            Error::Trial { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
