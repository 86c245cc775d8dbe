use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or matrix shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Convolution/pooling arithmetic does not produce integral output sizes,
    /// or a network geometry constraint cannot be satisfied.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A parameter is outside its documented range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input data cannot support the requested operation (e.g. all-identical
    /// values for a multi-component mixture fit).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Layer ordering not supported by an operation (e.g. FC before conv).
    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),

    /// A checkpoint, world snapshot, or other on-disk artifact is malformed.
    #[error("corrupt file: {0}")]
    Corrupt(String),

    /// CSV/dataset content failed validation.
    #[error("data error: {0}")]
    Data(String),

    /// Training loss became non-finite.
    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
