use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("closed-form expected NTK is only available for ReLU (got {0})")]
    UnsupportedClosedForm(crate::Activation),

    #[error("degenerate kernel: diagonal entry {index} is {value}")]
    DegenerateKernel { index: usize, value: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("late-stage crossing formula inapplicable: {0}")]
    Regime(String),

    #[error("training diverged at step {step} (loss {loss:e})")]
    Divergence { step: usize, loss: f64 },

    #[error("statistics: {0}")]
    Statistics(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("IDX format error in {path} at byte offset {offset}: {msg}")]
    IdxFormat {
        path: PathBuf,
        offset: usize,
        msg: String,
    },

    #[error("IDX consistency error: {0}")]
    IdxConsistency(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }
}
