use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph generation exhausted after {attempts} samples")]
    GraphExhausted { attempts: usize },

    #[error("rho >= 1 (got {0}); mixing matrix is not contractive")]
    RhoNotContractive(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("line {line}: {kind}")]
    Parse { line: usize, kind: ParseErrorKind },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("too few samples: {samples} samples for {agents} agents")]
    TooFewSamples { samples: usize, agents: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input to objective evaluation")]
    NonFiniteInput,

    #[error("ill-posed local solve")]
    IllPosedSolve,

    #[error("symmetric eigendecomposition did not converge")]
    EigenNonConvergence,

    #[error("compression failure")]
    CompressionFailure,

    #[error("reference computation failed: {0}")]
    Reference(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("malformed pair `{0}`")]
    MalformedPair(String),
    #[error("non-numeric value `{0}`")]
    NonNumeric(String),
    #[error("feature index 0 (indices are 1-based)")]
    ZeroIndex,
    #[error("non-increasing index {index} after {previous}")]
    NonIncreasingIndex { previous: usize, index: usize },
}

impl Error {
    /// Whether the error stems from bad user input rather than a failure
    /// during computation.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::InvalidParameter(_) | Error::Parse { .. })
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
