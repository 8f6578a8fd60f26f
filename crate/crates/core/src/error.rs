use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate homogeneous transform: w component is {0}")]
    DegenerateTransform(f64),

    #[error("rejected gaze sample: {0}")]
    RejectedSample(String),

    #[error("integration fault at t = {t:.6} s: {reason}")]
    IntegrationFault { t: f64, reason: String },

    #[error("empty metrics interval [{0}, {1}]")]
    EmptyInterval(f64, f64),

    #[error("config: {0}")]
    Config(String),

    #[error("trace: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
