use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("{what} is singular (condition estimate {cond:.3e})")]
    Singular { what: String, cond: f64 },
    #[error("model error: {0}")]
    Model(String),
    #[error("lambda = {re}{im:+}i is an eigenvalue of the realization (sigma_min/norm = {ratio:.3e})")]
    Eigenvalue { re: f64, im: f64, ratio: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
