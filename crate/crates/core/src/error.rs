use thiserror::Error;

use crate::topology::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("node {0} is unreachable from the gateway")]
    UnreachableNode(NodeId),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    #[error("config rejected: {0}")]
    ConfigRejected(String),
    #[error("episode aborted at tick {tick}: {reason}")]
    EpisodeAborted { tick: u64, reason: String },
    #[error("{} of the batch configs failed; first (index {}): {}", .0.len(), .0[0].0, .0[0].1)]
    Batch(Vec<(usize, Error)>),
    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
