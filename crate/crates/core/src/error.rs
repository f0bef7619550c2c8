use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("time {t} outside the model interval [{lo}, {hi}]")]
    Range { t: f64, lo: f64, hi: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("positivity violated at t = {t}: minimum eigenvalue {min_eig:.3e}; reduce dt")]
    Positivity { t: f64, min_eig: f64 },

    #[error("gauge discontinuity at t = {t}: basis overlap {overlap:.6} < 0.99")]
    Gauge { t: f64, overlap: f64 },

    #[error("unitarity drift {drift:.3e} exceeds 1e-6 at t = {t}; reduce the step size")]
    Unitarity { t: f64, drift: f64 },

    #[error("no decoherence-free subspace at t = {t}: {reason}")]
    NoDfs { t: f64, reason: String },

    #[error("unknown scenario '{0}'")]
    Scenario(String),
}
