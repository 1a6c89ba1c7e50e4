use thiserror::Error;

/// Errors raised by the library. Variants are grouped by family so the
/// command-line front end can map them onto exit codes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("outside the support region: {0}")]
    Domain(String),

    #[error("total internal reflection: radicand {radicand:e} < 0 at cosine {cosine}")]
    TotalInternalReflection { cosine: f64, radicand: f64 },

    #[error("inadmissible incidence: cosine {cosine} outside [{lo}, 1]")]
    InadmissibleIncidence { cosine: f64, lo: f64 },

    #[error("singular point: {0} supporting sheets meet here")]
    Tie(usize),

    #[error("assumption ({assumption}) failed: {detail}")]
    Assumption { assumption: String, detail: String },

    #[error("infeasible geometry: {0}")]
    Infeasible(String),

    #[error("no convergence after {sweeps} sweeps (residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("bracket exhausted for target {target}: {detail}")]
    BracketExhausted { target: usize, detail: String },

    #[error("support cut left for target {target}: {detail}")]
    SupportExit { target: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn assumption(name: &str, detail: impl Into<String>) -> Self {
        Error::Assumption {
            assumption: name.to_string(),
            detail: detail.into(),
        }
    }

    /// True for errors that mean "the solver ran but did not finish".
    pub fn is_convergence(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::BracketExhausted { .. } | Error::SupportExit { .. }
        )
    }

    /// True for errors that come from checking a configuration.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_) | Error::Assumption { .. } | Error::Infeasible(_)
        )
    }
}
