use thiserror::Error;

pub type Result<T, E = AutodiffError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("tensor data of length {len} does not fill shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("only rank 0..=2 tensors are supported, got shape {0:?}")]
    UnsupportedRank(Vec<usize>),
    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },
    #[error("{op}: index {index} out of bounds for {bound} rows")]
    IndexOutOfBounds {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("grad: output must be a scalar, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("variable #{index} does not belong to this tape")]
    ForeignVar { index: usize },
    #[error("invalid optimizer hyperparameter: {0}")]
    InvalidHyperparameter(String),
}
