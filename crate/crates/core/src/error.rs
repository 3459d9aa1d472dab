use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {field} must be positive (got {value})")]
    InvalidGeometry { field: &'static str, value: f64 },

    #[error("invalid parameter vector: {0}")]
    InvalidTheta(String),

    #[error("inertia matrix is near-singular (reciprocal condition {rcond:e})")]
    SingularInertia { rcond: f64 },

    #[error("certainty-equivalent inertia is not positive definite at t = {t}")]
    IndefiniteEstimate { t: f64 },

    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },

    #[error("invalid config field `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig { field: field.into(), message: message.into() }
    }
}
