use thiserror::Error;

/// Crate-wide error type. Variants map to the failure classes surfaced by the
/// CLI as machine-readable `class=` tokens.
#[derive(Error, Debug)]
pub enum Error {
    #[error("domain: {0}")]
    Domain(String),

    #[error("size: {0}")]
    Size(String),

    #[error("shape: {0}")]
    Shape(String),

    #[error("grid: {0}")]
    Grid(String),

    #[error("parameter: {0}")]
    Param(String),

    #[error("numeric: {0}")]
    Numeric(String),

    #[error("matrix is not positive semidefinite: {0}")]
    NotPsd(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("metric: {0}")]
    Metric(String),

    #[error("index: {0}")]
    Index(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable one-word class tag used in CLI error lines.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Size(_) => "size",
            Error::Shape(_) => "shape",
            Error::Grid(_) => "grid",
            Error::Param(_) => "parameter",
            Error::Numeric(_) => "numeric",
            Error::NotPsd(_) => "not_psd",
            Error::Parse { .. } => "parse",
            Error::Metric(_) => "metric",
            Error::Index(_) => "index",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
