use thiserror::Error;

/// Errors raised by the core toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParams { name: &'static str, reason: String },
    #[error("invalid integration option `{name}`: {reason}")]
    InvalidOptions { name: &'static str, reason: String },
    #[error("surface temperature {t_s} K sits on a coalbedo kink")]
    KinkPoint { t_s: f64 },
    #[error("epsilon_a = {epsilon_a} outside the supported range {range}")]
    EpsilonOutOfRange { epsilon_a: f64, range: &'static str },
    #[error("epsilon_a = {epsilon_a} is not supercritical (need > 2)")]
    EpsilonNotSupercritical { epsilon_a: f64 },
    #[error("negative input {value} for `{name}`")]
    NegativeInput { name: &'static str, value: f64 },
    #[error("trajectory did not converge")]
    NotConverged,
    #[error("operation needs an equilibrium off the coalbedo ramp")]
    OnRamp,
    #[error("degenerate equilibrium (determinant {det:e})")]
    Degenerate { det: f64 },
    #[error("invalid range: {0}")]
    RangeInvalid(String),
    #[error("no warm equilibrium at epsilon_a = {epsilon_a}")]
    NoWarmEquilibrium { epsilon_a: f64 },
    #[error("scenario is not bistable: found {census}")]
    NotBistable { census: String },
    #[error("computation did not converge: {0}")]
    NonConvergent(String),
    #[error("argument {value} outside the domain {domain}")]
    DomainError { value: f64, domain: &'static str },
    #[error("operation requires lambda > 0")]
    LambdaZero,
    #[error("trajectory never entered the escape region before the horizon")]
    NoEntry,
    #[error("atmospheric coalbedo is not supported by this operation")]
    AtmosphericCoalbedoUnsupported,
}

pub type Result<T> = std::result::Result<T, Error>;
