use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Core(#[from] lodestar_core::Error),

    #[error("chat backend: {0}")]
    Backend(String),

    #[error("parse: {0}")]
    Parse(String),

    #[error("prompt template: {0}")]
    Template(String),

    #[error("io: {0}")]
    Io(String),

    #[error("unknown trial {0}")]
    UnknownTrial(String),

    #[error("trial {0} already has an outcome")]
    AlreadyObserved(String),

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("event log: {0}")]
    EventLog(String),

    #[error("empty campaign: {0}")]
    EmptyCampaign(String),
}

impl From<std::io::Error> for AgentError {
    fn from(err: std::io::Error) -> Self {
        AgentError::Io(err.to_string())
    }
}

pub type AgentResult<T> = std::result::Result<T, AgentError>;
