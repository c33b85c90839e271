use thiserror::Error;

/// Errors produced anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("region selects no grid node ({0}); refine the grid")]
    EmptyMask(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration space: {0}")]
    InvalidSpace(String),

    #[error("configuration does not belong to the space: {0}")]
    InvalidConfiguration(String),

    #[error("cell partition does not match: {0}")]
    PartitionMismatch(String),

    #[error("forward solve unstable at t = {time}: density {value:e} exceeds bound {bound:e} (time step too large?)")]
    Unstable { time: f64, value: f64, bound: f64 },

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("observation window: {0}")]
    InvalidWindow(String),

    #[error("measurement file: {0}")]
    Format(String),

    #[error("checksum mismatch in section `{0}`")]
    Checksum(&'static str),

    #[error("unsupported measurement file version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },

    #[error("invalid experiment configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
