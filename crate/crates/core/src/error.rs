use std::path::PathBuf;

use crate::net::NodeId;

pub type Result<T, E = VneError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum VneError {
    #[error("unknown substrate node {0}")]
    UnknownNode(NodeId),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid request {id}: {reason}")]
    InvalidRequest { id: u64, reason: String },

    #[error("invalid embedding for request {vnr}: {reason}")]
    InvalidEmbedding { vnr: u64, reason: String },

    #[error("allocation of request {vnr} rejected: {reason}")]
    Infeasible { vnr: u64, reason: String },

    #[error("request {0} is already allocated")]
    AlreadyAllocated(u64),

    #[error("request {0} is not allocated")]
    NotAllocated(u64),

    #[error("power iteration stopped after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("every action is masked; no feasible choice")]
    EmptyMask,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("chosen action {action} at step {step} has zero probability")]
    ZeroProbabilityAction { step: usize, action: usize },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl VneError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        VneError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        VneError::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
