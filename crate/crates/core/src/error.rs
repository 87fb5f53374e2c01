use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid constellation spec: {0}")]
    InvalidSpec(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("insufficient geometry: {visible} satellite(s) usable, {required} required")]
    InsufficientGeometry { visible: usize, required: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("query time {time} s is not covered by the Doppler updates")]
    OutOfRange { time: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("reference satellite {sat_id} missing from {receiver} measurements")]
    MissingReference { sat_id: u32, receiver: String },

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("integer search exceeded the node cap of {cap}")]
    ResourceLimit { cap: u64 },

    #[error("normal matrix is rank deficient")]
    RankDeficient,

    #[error("Gauss-Newton did not converge after {iterations} iterations (last step {last_step:.3e} m)")]
    Convergence {
        iterations: usize,
        last_step: f64,
        last_position: [f64; 3],
    },

    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config key `{key}`: {message}")]
    ConfigSchema { key: String, message: String },

    #[error("{context}: {source}")]
    Annotated {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) | Error::InvalidInput(_) | Error::Shape(_) => "invalid-input",
            Error::InvalidGeometry(_) | Error::InsufficientGeometry { .. } => "geometry",
            Error::MissingReference { .. } => "missing-reference",
            Error::Numeric(_) | Error::NotPositiveDefinite | Error::RankDeficient => "numeric",
            Error::Convergence { .. } => "convergence",
            Error::OutOfRange { .. } => "out-of-range",
            Error::ResourceLimit { .. } => "resource-limit",
            Error::ConfigParse { .. } | Error::ConfigSchema { .. } => "config",
            Error::Annotated { source, .. } => source.category(),
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn annotate(self, context: impl Into<String>) -> Error {
        Error::Annotated {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
