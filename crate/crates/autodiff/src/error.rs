use thiserror::Error;

use crate::tensor::Shape;

pub type Result<T, E = AutodiffError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("backward root must be a 1x1 scalar, got {0}")]
    NotScalarRoot(Shape),
    #[error("target class {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("column slice {start}..{end} out of range for {cols} columns")]
    SliceOutOfRange { start: usize, end: usize, cols: usize },
    #[error("data length {len} does not match shape {shape}")]
    DataLength { len: usize, shape: Shape },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("log of non-positive value {0}")]
    LogDomain(f64),
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("{0} requires at least one input")]
    EmptyInput(&'static str),
}
