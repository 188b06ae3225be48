use thiserror::Error;

/// Errors raised by simulation, deconvolution and estimation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The latent chain left the region any contracting configuration can reach.
    #[error("simulation diverged at step {step}: |x| = {value:e}")]
    Divergence { step: usize, value: f64 },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("non-finite integrand sample at t = {t}")]
    NonFiniteIntegrand { t: f64 },

    #[error("unsupported combination: {0}")]
    Unsupported(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
