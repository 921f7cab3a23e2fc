use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("visibility undefined for a curve whose max + min is zero")]
    UndefinedVisibility,

    #[error("fit failed: {reason} (iterations: {iterations}, cost: {cost:.6e})")]
    FitFailure {
        reason: String,
        iterations: usize,
        cost: f64,
    },

    #[error("degenerate class: {0}")]
    DegenerateClass(String),

    #[error("classes are not separated: present mean {present:.3} <= absent mean {absent:.3}")]
    ClassesNotSeparated { present: f64, absent: f64 },

    #[error("no threshold reaches {requested:.3} sigma; classes are only {achievable:.3} sigma apart")]
    InfeasibleThreshold { requested: f64, achievable: f64 },

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
