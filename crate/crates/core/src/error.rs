use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {what} (residual {residual:.3e})")]
    NumericFailure { what: String, residual: f64 },

    #[error("matrix is not positive semi-definite: lambda_min = {lambda_min:.6e}")]
    NotPsd { lambda_min: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("training diverged at step {step} (last finite loss {last_finite_loss:.6e})")]
    Diverged { step: usize, last_finite_loss: f64 },

    #[error("infeasible separation: {0}")]
    InfeasibleSeparation(String),

    #[error("incomplete report: missing {0}")]
    IncompleteReport(String),

    #[error("memory cap exceeded: instance needs {required} bytes, cap is {cap} bytes")]
    MemoryCap { required: u64, cap: u64 },

    #[error("unknown experiment `{name}`; valid names: {valid}")]
    UnknownExperiment { name: String, valid: String },

    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
