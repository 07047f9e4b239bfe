use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: invalid shape {shape:?}: {reason}")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: String,
    },

    #[error("kernel {kernel}x{kernel} exceeds padded input {rows}x{cols}")]
    KernelTooLarge {
        kernel: usize,
        rows: usize,
        cols: usize,
    },

    #[error("{0} is not differentiable")]
    NonDifferentiable(&'static str),

    #[error("parameter set mismatch: {0}")]
    ParamMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("normal matrix is singular or ill-conditioned (condition estimate {cond:.3e} >= {limit:.3e})")]
    IllConditioned { cond: f64, limit: f64 },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("model format error: {0}")]
    Format(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
