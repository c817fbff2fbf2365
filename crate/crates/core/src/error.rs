use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The margin solver could not certify the target margin within its budget.
    #[error("no halfspace with margin {target} found (best certified {best:.6}){}", batch_suffix(*.batch))]
    InfeasibleMargin {
        target: f64,
        best: f64,
        batch: Option<usize>,
    },

    #[error("budget exceeded: {quantity} = {value} > {limit}")]
    BudgetExceeded {
        quantity: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("data source exhausted: requested rows {start}..{end} of {available}")]
    DataExhausted {
        start: usize,
        end: usize,
        available: usize,
    },

    #[error("degenerate output: {0}")]
    Degenerate(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

fn batch_suffix(batch: Option<usize>) -> String {
    match batch {
        Some(b) => format!(" in batch {b}"),
        None => String::new(),
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
