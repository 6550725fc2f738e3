use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("integration error: {0}")]
    Integration(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate frame: {0}")]
    Frame(String),

    #[error("rejected action: {0}")]
    RejectedAction(String),

    #[error("infeasible die geometry at sample {index} (s = {s} mm): k*A0/R0 = {ratio} > 1")]
    InfeasibleGeometry { index: usize, s: f64, ratio: f64 },

    #[error("invalid scene: {0}")]
    Scene(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("state error: {0}")]
    State(String),

    #[error("numeric fault: {0}")]
    NumericFault(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
