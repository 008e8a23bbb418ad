use thiserror::Error;

/// Errors produced by channel construction, detection and analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ITI level {0} outside [0, 0.5]")]
    EpsOutOfRange(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("trellis too large: n * nu = {0} exceeds the cap of 24")]
    TrellisTooLarge(usize),

    #[error("singular ITI transform: 1 + eps * lambda_hat = {0:e}")]
    SingularTransform(f64),

    #[error("error event and input disagree at track {track}, position {position}")]
    InvalidPair { track: usize, position: usize },

    #[error("no gain loop contributes an ITI estimate")]
    NoContributingLoop,

    #[error("closed form {0} is only derived for the 1+D target")]
    OutOfScope(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_eps(eps: f64) -> Result<f64> {
    if (0.0..=0.5).contains(&eps) {
        Ok(eps)
    } else {
        Err(Error::EpsOutOfRange(eps))
    }
}
