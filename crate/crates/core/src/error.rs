use thiserror::Error;

/// Errors raised by the partition toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("tilt solver did not converge after {iterations} iterations; root bracketed in [{lo}, {hi}]")]
    Solver { iterations: usize, lo: f64, hi: f64 },

    #[error("rejection cap of {attempts} exceeded; empirical acceptance rate {acceptance_rate:.3e}")]
    RejectionCap { attempts: u64, acceptance_rate: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
