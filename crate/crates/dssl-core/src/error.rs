use thiserror::Error;

/// Error type shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad model/dataset/run configuration (wrong dimensions, invalid grids).
    #[error("configuration error: {0}")]
    Config(String),

    /// API misuse (non-scalar loss, empty batch, mismatched row counts).
    #[error("usage error: {0}")]
    Usage(String),

    /// Non-finite values or optimization divergence.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Inputs that make the requested computation meaningless
    /// (e.g. single-class training labels for a probe).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A referenced artifact (checkpoint, dataset, config) does not exist.
    #[error("missing input: {0}")]
    MissingInput(String),

    /// Malformed on-disk artifacts (manifests, blobs, CSV matrices).
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
