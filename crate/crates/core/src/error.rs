use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("gimbal lock: |r31| = {r31} is too close to 1 for a unique Euler extraction")]
    GimbalLock { r31: f64 },
    #[error("matrix is not a proper rotation")]
    InvalidRotation,
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
    #[error("pose is branch-singular: {0}")]
    Singular(String),
    #[error("configuration index {0} is outside 0..=7")]
    InvalidConfiguration(u8),
    #[error("invalid placement problem: {0}")]
    InvalidProblem(String),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
