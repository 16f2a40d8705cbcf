use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A [`crate::model::SystemConfig`] or grid invariant does not hold.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{what} = {value} outside allowed range [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: i64,
        min: i64,
        max: i64,
    },

    #[error("column {0} of the measurement matrix is zero; normalization undefined")]
    ZeroColumn(usize),

    #[error("sparsity budget {k} exceeds column count {columns}")]
    SparsityTooLarge { k: usize, columns: usize },

    #[error("Fisher information matrix is singular along {direction}")]
    SingularFisher { direction: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("config parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
