use thiserror::Error;

use crate::topology::NodeId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DsgError {
    #[error("empty id list")]
    Empty,
    #[error("duplicate node id {0}")]
    DuplicateId(NodeId),
    #[error("balance parameter must be at least 2, got {0}")]
    BalanceTooSmall(usize),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("source and destination are the same node {0}")]
    SameNode(NodeId),
    #[error("node {0} is a dummy and cannot be an endpoint")]
    DummyEndpoint(NodeId),
    #[error("value count {got} does not match member count {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("topology became invalid: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for DsgError {
    fn from(e: std::io::Error) -> Self {
        DsgError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, DsgError>;
