use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("infeasible link: UE {ue} has zero rate towards UAV {uav}")]
    InfeasibleLink { ue: usize, uav: usize },

    #[error("invalid allocation for UE {ue}: {reason}")]
    InvalidAllocation { ue: usize, reason: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("slice capacity exceeded: {0}")]
    Capacity(String),

    #[error("forbidden operation: {0}")]
    Forbidden(String),

    #[error("agent supports {supported} UAVs but {requested} are active; progressive adjustment required")]
    AdjustRequired { supported: usize, requested: usize },

    #[error("missing forward cache: {0}")]
    MissingCache(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt checkpoint payload: {0}")]
    CorruptPayload(String),

    #[error("search budget exceeded: {0}")]
    Budget(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
