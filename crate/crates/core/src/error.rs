use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload: need {needed} bytes, have {available}")]
    TruncatedPayload { needed: usize, available: usize },
    #[error("dimension overflow in header")]
    DimensionOverflow,
    #[error("singular normal equations at LR cell ({row}, {col}) despite ridge")]
    Singular { row: usize, col: usize },
    #[error("ill-conditioned observation covariance: {0}")]
    IllConditioned(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("missing moment fields: {0}")]
    MissingMoments(String),
    #[error("malformed container: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
