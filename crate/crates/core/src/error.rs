use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Upsilon_2 (or Sigma_2) is singular or too badly conditioned at a point.
    #[error("well-posedness violated at x = {x:?}, delta = {delta:?}: {reason}")]
    WellPosedness {
        x: Vec<f64>,
        delta: Vec<f64>,
        reason: String,
    },

    #[error("model file: {0}")]
    Parse(String),

    #[error(transparent)]
    Sdp(#[from] sofsat_sdp::SdpError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
