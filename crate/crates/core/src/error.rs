use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T> = std::result::Result<T, IcpError>;

#[derive(Debug, Error)]
pub enum IcpError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("invalid edge {parent} -> {child}: {reason}")]
    InvalidEdge {
        parent: NodeId,
        child: NodeId,
        reason: &'static str,
    },

    #[error("order values of active nodes {0} and {1} tie at {2}")]
    Tie(NodeId, NodeId, f64),

    #[error("active hidden node {0} has no active child")]
    ZeroOutDegree(NodeId),

    #[error("reference state has zero probability")]
    ZeroProbability,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
