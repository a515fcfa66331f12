use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("steady state is degenerate: null space has dimension {multiplicity}")]
    DegenerateSteadyState { multiplicity: usize },

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("step size underflow at t = {t} us (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("oscillatory regime: no purely real slow pole (gamma^2 + 2 g_delta^2 = {0:.6e})")]
    OscillatoryRegime(f64),

    #[error("correlation window too short: |g(tau_max)|/|g(0)| = {ratio:.2e} at tau_max = {tau_max} us; use a longer window")]
    WindowTooShort { ratio: f64, tau_max: f64 },

    #[error("fit failed: {reason} (rms residual {rms:.3e})")]
    FitFailed { reason: String, rms: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("truncation ladder hit cap {cap} before converging (last relative change {last_change:.3e})")]
    TruncationCap { cap: usize, last_change: f64 },

    #[error("unsupported bichromatic drive: pump and probe both nonzero")]
    Bichromatic,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
