use std::path::PathBuf;

use gabo_autodiff::AutodiffError;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line} (graph {index}): {reason}")]
    InvalidGraph {
        line: usize,
        index: usize,
        reason: String,
    },

    #[error("graph invariant violated: {0}")]
    Graph(String),

    #[error("split: {0}")]
    Split(String),

    #[error("synthetic dataset: {0}")]
    Synth(String),

    #[error(
        "pagerank did not converge after {iterations} iterations (last L1 change {residual:e})"
    )]
    PageRankDiverged { iterations: usize, residual: f64 },

    #[error("node {node}, field {field}: code {code} outside vocabulary of size {vocab}")]
    OutOfVocab {
        node: usize,
        field: usize,
        code: u32,
        vocab: usize,
    },

    #[error("model: {0}")]
    Model(String),

    #[error("roc_auc needs both classes, got {positives} positives and {negatives} negatives")]
    SingleClass { positives: usize, negatives: usize },

    #[error("config field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("outer step called with an empty unroll window")]
    EmptyWindow,

    #[error("training aborted: {0}")]
    Aborted(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }
}
