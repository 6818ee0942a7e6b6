use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid grid-world spec: {0}")]
    InvalidGrid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
    #[error("run for seed {seed} with {algorithm} failed: {source}")]
    RunFailed {
        algorithm: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}
