use thiserror::Error;

/// Errors raised by every operation in the kit.
///
/// Contract violations (bad shapes, out-of-range parameters, degenerate
/// geometry) are distinguished from I/O and decoding failures so that callers
/// such as the CLI can map them onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("point at infinity when mapping pixel ({x}, {y})")]
    PointAtInfinity { x: f64, y: f64 },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the caller's inputs rather than the environment.
    pub fn is_contract_violation(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
