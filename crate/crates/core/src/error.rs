use thiserror::Error;

pub type Result<T> = std::result::Result<T, QisError>;

#[derive(Debug, Error)]
pub enum QisError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("root finding did not converge for q={q}, z={z}")]
    Convergence { q: u32, z: f64 },

    #[error("degenerate Ψ for q={q}, θ={theta}: inversion is ill-conditioned")]
    Degenerate { q: u32, theta: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl QisError {
    /// True for errors caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            QisError::Convergence { .. } | QisError::Degenerate { .. }
        )
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(QisError::Domain(msg.into()))
}
