use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("model evaluation failed at row {row}: {message}")]
    Evaluation { row: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("not estimable: {0}")]
    NotEstimable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
