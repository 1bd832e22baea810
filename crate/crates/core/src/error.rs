use thiserror::Error;

/// Errors raised by the simulation modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("newton solver did not converge at lambda = {lambda:e} (gradient residual {residual:e} after {iterations} iterations)")]
    NewtonNotConverged {
        lambda: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("training data is not linearly separable (witness residual {witness_residual:e})")]
    Inseparable { witness_residual: f64 },

    #[error("dual coordinate ascent stopped after {sweeps} sweeps with KKT residual {residual:e}")]
    DualNotConverged { sweeps: usize, residual: f64 },

    #[error("iterate at t = {0} was not recorded in the trace")]
    NotRecorded(u64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
