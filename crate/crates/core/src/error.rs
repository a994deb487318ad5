use thiserror::Error;

/// Errors raised by the toolkit. Numerical invariant violations that are
/// expected to be inspected (homogeneity, Lipschitz excess, certificate
/// margins) are reported in result structs instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("admissibility violated at node {node} in direction {direction:?}: F + df = {value:.6e}")]
    Admissibility {
        node: usize,
        direction: Vec<f64>,
        value: f64,
    },
    #[error("graph construction failed on edge {tail} -> {head}: weight {weight:.6e}")]
    NonPositiveWeight { tail: usize, head: usize, weight: f64 },
    #[error("construction error: {0}")]
    Construction(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
