use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error(transparent)]
    Comm(#[from] rbc::Error),

    #[error("sort protocol violation: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
