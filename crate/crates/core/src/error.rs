use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid mesh, domain or experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument outside the documented range of an operation.
    #[error("invalid input: {0}")]
    Input(String),

    /// A caller broke an operation precondition (e.g. nonzero boundary values).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The field lies outside the domain of a quotient (T = 0, A <= tol, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A hypothesis on the data required by the requested operation does not hold.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
