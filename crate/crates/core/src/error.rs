use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("frame stack is empty")]
    EmptyStack,
    #[error("empty subsample")]
    EmptySubsample,
    #[error("frame {index} has dimensions {found:?}, expected {expected:?}")]
    DimensionMismatch {
        index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("frame {frame} holds intensity {value} outside [0, 1]")]
    IntensityOutOfRange { frame: usize, value: f64 },
    #[error("subsample index {index} out of range for {len} frames")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("subsample indices must be strictly increasing")]
    UnsortedIndices,
    #[error("oracle size limit: {n} frames exceeds the maximum of {max}")]
    OracleSizeLimit { n: usize, max: usize },
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
