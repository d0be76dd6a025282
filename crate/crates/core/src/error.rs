use thiserror::Error;

/// Errors raised by the engine.
///
/// Numeric payloads are carried as `f64` regardless of the scalar type the
/// computation ran in.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("missing model parameter `{0}`")]
    MissingParameter(&'static str),
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("correlation must lie in (-1, 1), got {0}")]
    InvalidCorrelation(f64),
    #[error("risk-free rate must be non-negative, got {0}")]
    NegativeRate(f64),
    #[error("Feller condition violated: 2*kappa*theta = {lhs} < vol^2 = {rhs}")]
    FellerViolation { lhs: f64, rhs: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state entries must be strictly positive")]
    NonPositiveState,
    #[error("invalid horizon: need T > t0 and at least one step")]
    InvalidHorizon,
    #[error("contract with maturity {maturity} evaluated at t = {t}")]
    ExpiredContract { t: f64, maturity: f64 },
    #[error("contract `{contract}` is not supported under the {model} model")]
    UnsupportedPair {
        model: &'static str,
        contract: &'static str,
    },
    #[error("exposure system is singular (condition number {condition:.3e}, residual {residual:.3e})")]
    SingularSystem { condition: f64, residual: f64 },
    #[error("target drift violates the tracking condition (drift-row residual {residual:.3e})")]
    InconsistentDrift { residual: f64 },
    #[error("two-futures system needs distinct maturities")]
    DegenerateMaturities,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("calibration needs at least two quotes with distinct maturities")]
    InsufficientQuotes,
    #[error("calibration did not converge to positive parameters")]
    FitDiverged,
    #[error("portfolio value became non-positive at step {step}")]
    BankruptPath { step: usize },
    #[error("time {t} lies outside the roll calendar")]
    OutOfCalendar { t: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
