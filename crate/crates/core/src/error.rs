use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReproError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid support: {0}")]
    InvalidSupport(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("level {0} is outside the open interval (0, 1)")]
    InvalidLevel(f64),

    #[error("support is empty but a basis of rank >= 1 was required")]
    EmptySupport,

    #[error("vector has zero norm")]
    ZeroVector,

    #[error("rank deficient design: rank {rank} < {expected} columns")]
    RankDeficient { expected: usize, rank: usize },

    #[error("coordinate descent did not converge at lambda = {lambda:.6e} (last change {gap:.3e})")]
    NonConvergence { lambda: f64, gap: f64 },

    #[error("enumeration too large: {0:.0} subsets")]
    TooLarge(f64),

    #[error("residual norm {0:.3e} is degenerate: response lies in the model span")]
    DegenerateResidual(f64),

    #[error("denominator {0:.3e} of the pivot statistic is degenerate")]
    DegenerateDenominator(f64),

    #[error("transform is singular or ill-conditioned (condition number {0:.3e})")]
    SingularTransform(f64),
}

impl ReproError {
    /// Errors caused by bad input or configuration rather than by numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            ReproError::DimensionMismatch(_)
                | ReproError::InvalidData(_)
                | ReproError::InvalidSupport(_)
                | ReproError::InvalidConfig(_)
                | ReproError::InvalidLevel(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, ReproError>;

pub(crate) fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(ReproError::InvalidLevel(level))
    }
}
