use thiserror::Error;

/// Failures of the analytic pipeline and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AoiError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unstable model: rho + rho_bg = {rho} + {rho_bg} >= 1; the stability condition rho + rho_bg < 1 is violated")]
    Unstable { rho: f64, rho_bg: f64 },

    #[error("{what} did not converge within {limit} iterations")]
    NoConvergence { what: &'static str, limit: usize },

    #[error("{what} lost monotonicity at step {step} (violation {amount:e}); the series truncation is too short")]
    NonMonotone { what: &'static str, step: usize, amount: f64 },

    #[error("{what} left the substochastic region at step {step} (violation {amount:e})")]
    NotSubstochastic { what: &'static str, step: usize, amount: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("{what} exceeded its hard cap of {cap} terms")]
    TruncationCap { what: &'static str, cap: usize },

    #[error("{what}: negative coefficient {value:e} at index {index}")]
    Negative { what: &'static str, index: usize, value: f64 },

    #[error("no interior minimum in [{lo}, {hi}]")]
    NoInteriorMinimum { lo: f64, hi: f64 },

    #[error("simulation check failed: {0}")]
    Simulation(String),
}

pub type Result<T, E = AoiError> = std::result::Result<T, E>;
