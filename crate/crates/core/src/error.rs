use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("phase point has t = {t} beyond horizon T = {horizon}")]
    TimeOrder { t: f64, horizon: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("time step {dt} is not an integer multiple of the velocity dual spacing {dxi}")]
    UnalignedStep { dt: f64, dxi: f64 },

    #[error("velocity radius {radius} outside the materialized range [0, {max}]")]
    OutOfRange { radius: f64, max: f64 },

    #[error("instability at t = {time}: L2 norm grew by {growth:.3e} in one step")]
    Instability { time: f64, growth: f64 },

    #[error("initial data rejected: {0}")]
    InitialData(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
