use thiserror::Error;

/// Every failure the library can report.
///
/// Variants split into two families: precondition / input problems and
/// numerical failures. [`Error::is_numerical`] tells them apart, which the
/// command-line driver uses to pick its exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("matrix is rank deficient (column {column})")]
    RankDeficient { column: usize },
    #[error("eigenvalue iteration did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("matrix is not invertible: {0}")]
    NonInvertible(String),

    #[error("quadratic program is infeasible")]
    Infeasible,
    #[error("quadratic program has negative curvature {0:e}")]
    NonConvex(f64),
    #[error("iteration limit {0} reached")]
    MaxIter(usize),
    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("controller infeasible at step {step}")]
    ControllerInfeasible { step: usize },
    #[error("sampling exhausted: accepted {accepted} of {draws} draws")]
    SamplingExhausted { accepted: usize, draws: usize },
    #[error("trajectory set is empty")]
    EmptySet,

    #[error("active-set enumeration budget exceeded ({0} candidate sets)")]
    EnumerationBudgetExceeded(u128),
    #[error("point lies outside the partition")]
    OutsidePartition,
    #[error("piecewise-affine input is discontinuous (jump {0:e})")]
    DiscontinuousInput(f64),
    #[error("no affine pieces given")]
    EmptyPieces,

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error("projection infeasible: state outside the recoverable set")]
    ProjectionInfeasible,

    #[error("an invalid point at the origin makes the ellipsoid margin infeasible")]
    InfeasibleMargin,
    #[error("classifier input contains a single class")]
    SingleClassInput,
    #[error("reference set has no positive trajectories")]
    EmptyPositiveReference,
    #[error("empty denominator in {0}")]
    EmptyDenominator(&'static str),
    #[error("audit failed: row {row} differs from a fresh solve by {deviation:e}")]
    AuditFailed { row: usize, deviation: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::RankDeficient { .. }
                | Error::NoConvergence(_)
                | Error::NonInvertible(_)
                | Error::Infeasible
                | Error::NonConvex(_)
                | Error::MaxIter(_)
                | Error::Lp(_)
                | Error::ControllerInfeasible { .. }
                | Error::SamplingExhausted { .. }
                | Error::EnumerationBudgetExceeded(_)
                | Error::DiscontinuousInput(_)
                | Error::NonFiniteLoss { .. }
                | Error::ProjectionInfeasible
                | Error::InfeasibleMargin
                | Error::AuditFailed { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_check(ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(what()))
    }
}
