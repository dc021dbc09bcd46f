use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MobilError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("singular problem: {0}")]
    Singular(String),
    #[error("unstable closed loop: {0}")]
    Unstable(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
}

impl MobilError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        MobilError::InvalidArgument(msg.into())
    }

    pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(MobilError::Dimension { expected, got })
        }
    }
}

pub type Result<T> = std::result::Result<T, MobilError>;
