use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),
    /// Input outside a validity window or bounding box.
    #[error("range error: {0}")]
    Range(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("infeasible resample: {0}")]
    InfeasibleResample(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    /// Query time outside the duration of an operational volume.
    #[error("temporal range error: t = {t} outside [{start}, {end}]")]
    TemporalRange { t: f64, start: f64, end: f64 },
    #[error("verification failed for OV {ov}: inclusion {ratio:.4} below {threshold}")]
    Verification { ov: usize, ratio: f64, threshold: f64 },
    #[error("planning failed: {0}")]
    Planning(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
