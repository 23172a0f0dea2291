use alloc::string::String;

/// Errors produced by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("label {label} outside {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite value in {0}")]
    Numeric(String),
    #[error("negative sampling failed: {0}")]
    Sampling(String),
    #[error("model is frozen and rejects parameter updates")]
    Frozen,
    #[error("degenerate density: {0}")]
    DegenerateDensity(String),
    #[error("graph has no nodes")]
    EmptyGraph,
}

pub type Result<T> = core::result::Result<T, Error>;
