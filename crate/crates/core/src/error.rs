use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("root bracketing exhausted search interval (found {found} of {wanted} roots below beta*l = {limit})")]
    BracketingExhausted {
        found: usize,
        wanted: usize,
        limit: f64,
    },

    #[error("controllability matrix is rank deficient: rank {rank} of {order}")]
    Uncontrollable { rank: usize, order: usize },

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("simulation diverged at t = {time:.6} s: {reason}")]
    Diverged {
        time: f64,
        reason: String,
        snapshot: Vec<f64>,
    },

    #[error("time hierarchy violated: observer bound {observer:.6} s must be strictly below controller bound {controller:.6} s")]
    TimeHierarchy { observer: f64, controller: f64 },

    #[error("configuration error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
