use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chain specification: {0}")]
    InvalidSpec(String),

    #[error("magnetization sector m = {m} is empty for L = {length}, S = {spin}")]
    EmptySector { m: i64, length: usize, spin: u32 },

    #[error("sector dimension {dim} exceeds the cap of {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("eigensolver did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("ground state is degenerate within the sector (gap {gap:.3e})")]
    DegenerateGround { gap: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("ground-state solve failed: {0}")]
    EngineFailure(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("series has no interior maximum")]
    NoInteriorMax,

    #[error("peak window holds {found} samples, need at least {needed}")]
    WindowTooSparse { found: usize, needed: usize },

    #[error("difference of the two series does not change sign in the overlap window")]
    NoSignChange,

    #[error("difference of the two series changes sign {count} times in the overlap window")]
    MultipleRoots { count: usize },

    #[error("Jacobian is singular at the current parameters")]
    SingularJacobian,

    #[error("fit made no progress: {0}")]
    NoDescent(String),

    #[error("transition type is ambiguous: p = {p:.4} +/- {sigma:.4}")]
    Ambiguous { p: f64, sigma: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("duplicate record key: {0}")]
    DuplicateKey(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
