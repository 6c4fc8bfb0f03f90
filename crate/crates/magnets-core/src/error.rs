use alloc::string::String;
use core::fmt;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible with the requested operation.
    ShapeMismatch { op: &'static str, detail: String },
    /// An argument violates an operation's preconditions.
    InvalidArgument { op: &'static str, detail: String },
    /// A NaN or infinity appeared where a finite value is required.
    NonFinite { what: String },
    /// Training produced a non-finite loss; the model keeps its last good parameters.
    Diverged { epoch: usize },
    /// An iterative solver stopped before reaching its tolerance.
    NoConvergence { what: String, residual: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: String) -> Self {
        Error::ShapeMismatch { op, detail }
    }

    pub(crate) fn invalid(op: &'static str, detail: String) -> Self {
        Error::InvalidArgument { op, detail }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, detail } => write!(f, "{op}: shape mismatch: {detail}"),
            Error::InvalidArgument { op, detail } => write!(f, "{op}: invalid argument: {detail}"),
            Error::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Error::Diverged { epoch } => write!(f, "training diverged at epoch {epoch}"),
            Error::NoConvergence { what, residual } => {
                write!(f, "{what} did not converge (residual {residual:e})")
            }
        }
    }
}

impl core::error::Error for Error {}
