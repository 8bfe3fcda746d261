use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two tensors (or a tensor and an expected shape) disagree.
    #[error("dimension mismatch in {context}: {left:?} vs {right:?}")]
    Dimension {
        context: String,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// A configuration value is invalid (non-divisible dims, bad threshold, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// The ID-vector pool cannot satisfy an allocation request.
    #[error("id pool exhausted: requested {requested}, only {free} free")]
    PoolExhausted { requested: usize, free: usize },

    /// A caller violated an internal contract (e.g. fully-blocked attention row).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A measured quantity exceeded its pinned tolerance.
    #[error("tolerance exceeded: {0}")]
    Tolerance(String),

    /// Input data failed validation (never-visible track, empty scene, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A serialized file is malformed; `offset` names the failing byte.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// A forward pass referenced a parameter missing from the weight bundle.
    #[error("missing parameter: {0}")]
    MissingParam(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn dimension(context: impl Into<String>, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            context: context.into(),
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    /// Process exit code: 1 for contract/tolerance failures, 2 for input errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Contract(_) | Error::Tolerance(_) => 1,
            _ => 2,
        }
    }
}
