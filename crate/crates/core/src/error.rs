use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown station `{station}` in {context}")]
    UnknownStation { station: String, context: String },

    #[error("unknown route `{route}` in {context}")]
    UnknownRoute { route: String, context: String },

    #[error("unknown run `{run}` in {context}")]
    UnknownRun { run: String, context: String },

    #[error("invalid path {path_index} for od {origin}->{destination}: {reason}")]
    InvalidPath {
        origin: String,
        destination: String,
        path_index: usize,
        reason: String,
    },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid incident: {0}")]
    InvalidIncident(String),

    #[error("invalid demand: {0}")]
    InvalidDemand(String),

    #[error("invalid shares: {0}")]
    InvalidShares(String),

    #[error("invalid uncertainty model: {0}")]
    InvalidUncertainty(String),

    #[error("solver: {0}")]
    Solver(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
