use thiserror::Error;

/// Errors raised by the solvers, schedulers and the scenario driver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid plant coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("kernel iteration did not converge after {iterations} sweeps (residual {residual:.3e} > tol {tol:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("CFL violated: dt * max(lambda) = {courant:.6e} exceeds dx = {dx:.6e}")]
    CflViolation { courant: f64, dx: f64 },

    #[error("invalid trigger parameters: {0}")]
    InvalidParams(String),

    #[error("mu = {mu} outside the admissible interval (0, {mu_max})")]
    MuOutOfRange { mu: f64, mu_max: f64 },

    #[error("reflection assumption violated: |rho q| = {rho_q} must be < 1/2")]
    AssumptionViolated { rho_q: f64 },

    #[error("sampling period collapses to zero: h_frac * tau = {requested:.6e} < dt = {dt:.6e}")]
    DtTooCoarse { requested: f64, dt: f64 },

    #[error("sampling period h = {h} must satisfy 0 < h <= tau = {tau}")]
    SamplingPeriodTooLong { h: f64, tau: f64 },

    #[error("self-triggered growth rate varrho = {0} is not positive; increase delta_bar")]
    VarrhoNotPositive(f64),

    #[error("mu_bar = {0} is not positive (requires |2 q rho| < 1)")]
    MuBarNonpositive(f64),

    #[error("dynamic variable m = {0} is not negative at an event")]
    NonNegativeM(f64),

    #[error("supercritical flow: g H_eq = {g_h} <= V_eq^2 = {v_sq}")]
    SupercriticalFlow { g_h: f64, v_sq: f64 },

    #[error("bottom slope {given} does not match Cf V_eq^2 / (g H_eq) = {expected}")]
    SlopeMismatch { given: f64, expected: f64 },

    #[error("invalid canal configuration: {0}")]
    InvalidCanal(String),

    #[error("gate submerged: H(l) = {h_at_ell} <= downstream level {h_ell}")]
    GateSubmerged { h_at_ell: f64, h_ell: f64 },

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("output directory {path} is not writable: {reason}")]
    OutputDirUnwritable { path: String, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::InvalidCoefficients(_) => "InvalidCoefficients",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::GridMismatch(_) => "GridMismatch",
            Error::CflViolation { .. } => "CflViolation",
            Error::InvalidParams(_) => "InvalidParams",
            Error::MuOutOfRange { .. } => "MuOutOfRange",
            Error::AssumptionViolated { .. } => "AssumptionViolated",
            Error::DtTooCoarse { .. } => "DtTooCoarse",
            Error::SamplingPeriodTooLong { .. } => "SamplingPeriodTooLong",
            Error::VarrhoNotPositive(_) => "VarrhoNotPositive",
            Error::MuBarNonpositive(_) => "MuBarNonpositive",
            Error::NonNegativeM(_) => "NonNegativeM",
            Error::SupercriticalFlow { .. } => "SupercriticalFlow",
            Error::SlopeMismatch { .. } => "SlopeMismatch",
            Error::InvalidCanal(_) => "InvalidCanal",
            Error::GateSubmerged { .. } => "GateSubmerged",
            Error::ConfigMismatch(_) => "ConfigMismatch",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::OutputDirUnwritable { .. } => "OutputDirUnwritable",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
