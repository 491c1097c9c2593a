use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The quadrature grid failed its self-consistency check.
    #[error("quadrature grid too coarse: norm of HG{order}{order} off by {deviation:.3e}")]
    GridTooCoarse { order: usize, deviation: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("basis mismatch between {0}")]
    BasisMismatch(&'static str),

    #[error("state coefficients are all zero")]
    ZeroState,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A physical-model validity check failed (e.g. paraxial limit).
    #[error("model validity check failed: {0}")]
    Validity(String),

    #[error("zero total counts in correlation estimate")]
    ZeroTotal,

    #[error("no dip found in scan")]
    NoDipFound,

    #[error("ill-posed fit problem: {0}")]
    IllPosed(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for errors caused by numerical or model-validity checks.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::GridTooCoarse { .. } | Error::Validity(_) | Error::NoDipFound | Error::ZeroTotal
        )
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}
