use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration, detected before any compute.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite value of {partial} at x = {x}, theta = {theta}")]
    NonFinite {
        partial: &'static str,
        x: f64,
        theta: f64,
    },

    #[error("domain too small: m(±L)/max(m) = {ratio:e} exceeds {limit:e}")]
    Truncation { ratio: f64, limit: f64 },

    #[error("invariant density is not integrable: {0}")]
    Divergence(String),

    #[error("source term is not centered: |∫H dμ| = {residual:e} (limit {limit:e})")]
    Centering { residual: f64, limit: f64 },

    #[error("sequencing error: {0}")]
    Sequencing(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("sample size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error was raised while validating inputs, as opposed to
    /// during numerical work.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::SizeMismatch(..))
    }
}
