use thiserror::Error;

#[derive(Debug, Error)]
pub enum EdpmError {
    /// An input outside the domain an operation accepts.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid stick-breaking vector: {0}")]
    InvalidStick(String),

    /// Cholesky or inversion failure.
    #[error("matrix error: {0}")]
    Matrix(String),

    /// Non-finite state, underflow of every categorical mass, and similar.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl EdpmError {
    pub fn domain(msg: impl Into<String>) -> Self {
        EdpmError::Domain(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        EdpmError::Numerical(msg.into())
    }

    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        EdpmError::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = EdpmError> = std::result::Result<T, E>;
