use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("series too short: need at least {required} values, got {actual}")]
    SeriesTooShort { required: usize, actual: usize },

    #[error("zero variance {0}")]
    ZeroVariance(&'static str),

    #[error("internal consistency violated: {0}")]
    Consistency(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("divergent parameters: trajectory left [0, 1] at step {step}")]
    Divergent { step: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),
}
