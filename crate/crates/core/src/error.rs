//! Error type shared by all solver and analysis modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    /// Bad input: parameters, grid sizes, configuration files.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The vertical coordinate map lost injectivity (discrete Jacobian below
    /// the configured floor).
    #[error("degenerate coordinate map: {0}")]
    DegenerateMap(String),

    /// The interface left the admissible strip around the reference level.
    #[error("interface margin violated: {0}")]
    MarginViolation(String),

    /// A linear solve failed to reach its tolerance.
    #[error("linear solver breakdown: {0}")]
    SolverBreakdown(String),

    /// Root finding ran out of iterations.
    #[error("iteration failed to converge: {0}")]
    NonConvergence(String),

    /// A complex square root argument landed on the negative real axis, where
    /// the principal branch is discontinuous.
    #[error("branch cut hit: {0}")]
    BranchCut(String),

    /// Half-space mode solve: the truncated depth is too shallow to be trusted.
    #[error("truncation depth insufficient: {0}")]
    TruncationDepth(String),

    /// Snapshot refused: the stored configuration hash does not match.
    #[error("snapshot mismatch: {0}")]
    SnapshotMismatch(String),

    /// The well-posedness monitor tripped and halting is enabled.
    #[error("well-posedness halt: {0}")]
    WellposednessHalt(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl SimError {
    /// Process exit code for the CLI: 2 validation, 3 numerical failure,
    /// 4 margin/well-posedness halt.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::InvalidParameter(_) | SimError::SnapshotMismatch(_) => 2,
            SimError::MarginViolation(_) | SimError::WellposednessHalt(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
