use thiserror::Error;

#[derive(Debug, Error)]
pub enum McError {
    #[error("invalid design: {0}")]
    Design(String),
    #[error("replication {index} failed: {source}")]
    Replication {
        index: usize,
        #[source]
        source: ivtest::Error,
    },
    #[error(transparent)]
    Core(#[from] ivtest::Error),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, McError>;
