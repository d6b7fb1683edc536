use thiserror::Error;

pub type Result<T, E = FptError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FptError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("harvest rate qE = {harvest} must be below the growth rate r = {r}")]
    InvalidHarvest { harvest: f64, r: f64 },

    #[error("non-persistent regime: rho = {rho} must be positive")]
    NonPersistentRegime { rho: f64 },

    #[error("threshold {threshold} is on the wrong side of x0 = {x0} for a {direction} crossing")]
    WrongSide { direction: &'static str, threshold: f64, x0: f64 },

    #[error("index out of range: {what} (n = {n}, k = {k}, limit = {limit})")]
    IndexOutOfRange { what: &'static str, n: usize, k: usize, limit: usize },

    #[error("series has a zero constant term")]
    ZeroConstantTerm,

    #[error("series logarithm needs a positive constant term")]
    NonPositiveConstantTerm,

    #[error("l-series coefficient {k} did not converge within {n_max} kernel rows")]
    NoConvergence { k: usize, n_max: usize },

    #[error("asymptotic coefficient {m}: error estimate {estimate:e} exceeds tolerance {tol:e}")]
    AsymptoticAccuracyExceeded { m: usize, estimate: f64, tol: f64 },

    #[error("moment of order {order} is not reliable: relative error estimate {rel_error:e}")]
    NonConvergent { order: usize, rel_error: f64 },

    #[error("Kummer parameter b = {b} is a non-positive integer")]
    BadParameterB { b: f64 },

    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),

    #[error("finite-difference stencil failed: {0}")]
    StencilFailure(String),

    #[error("variance is zero or negative; cannot match a Gamma reference")]
    ZeroVariance,

    #[error("need moments up to order {needed}, have {have}")]
    InsufficientMoments { needed: usize, have: usize },

    #[error("sample is empty")]
    EmptySample,

    #[error("likelihood data set is empty")]
    EmptyData,

    #[error("initial point is infeasible: {0}")]
    NoFeasibleStart(String),
}

impl FptError {
    /// True when the error describes an inadmissible model regime rather
    /// than malformed input or a numerical failure.
    pub fn is_regime(&self) -> bool {
        matches!(self, FptError::NonPersistentRegime { .. } | FptError::InvalidHarvest { .. })
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            FptError::NoConvergence { .. }
                | FptError::AsymptoticAccuracyExceeded { .. }
                | FptError::NonConvergent { .. }
                | FptError::QuadratureFailure(_)
                | FptError::StencilFailure(_)
        )
    }
}
