use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("config: {0}")]
    Config(String),
    #[error("uncontrollable configuration: {0}")]
    Uncontrollable(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("state-space violation at s = {s:.4}: {reason}")]
    StateSpaceViolation { s: f64, reason: String },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("solver did not converge (constraint violation {violation:.3e})")]
    NotConverged { violation: f64 },
    #[error("no path between start and goal")]
    NoPath,
    #[error("planning budget exhausted before a first solution")]
    BudgetExhausted,
    #[error("primitive chain mismatch at index {0}")]
    ChainMismatch(usize),
    #[error("start state is in collision")]
    StartInCollision,
    #[error("goal state is in collision")]
    GoalInCollision,
    #[error("empty primitive library")]
    EmptyLibrary,
    #[error("tube violation at s = {s:.3}: |z3| = {z3:.3}")]
    TubeViolation { s: f64, z3: f64 },
    #[error("singular: {0}")]
    Singular(String),
    #[error("not stabilizable: {0}")]
    NotStabilizable(String),
    #[error("filter divergence: {0}")]
    Divergence(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
