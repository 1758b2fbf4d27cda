use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate plane basis: {0}")]
    DegenerateBasis(String),

    #[error("distribution not normalized: total mass {total}")]
    Unnormalized { total: f64 },

    #[error("missing segment for checkpoint {checkpoint}")]
    MissingSegment { checkpoint: usize },

    #[error("unknown averaging variant: {0}")]
    UnknownVariant(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed parameter file: {0}")]
    MalformedFile(String),
}
