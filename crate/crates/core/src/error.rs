use thiserror::Error;

pub type Result<T> = std::result::Result<T, NceError>;

#[derive(Debug, Error)]
pub enum NceError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("kernel evaluated inside the cavity (r = 0)")]
    Cavity,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("missing entry: {0}")]
    Lookup(String),
    #[error("singular contrast: prop1 + (d-1)·prop0 = 0")]
    SingularContrast,
    #[error("near-percolation singularity in the series solve (condition number {cond:.3e})")]
    NearPercolation { cond: f64 },
    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("wave number sits on a grid resonance (condition estimate {cond:.3e})")]
    Resonance { cond: f64 },
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NceError {
    /// True for failures caused by bad input rather than by the numerics.
    pub fn is_parameter_error(&self) -> bool {
        matches!(
            self,
            NceError::Param(_) | NceError::Format(_) | NceError::Lookup(_) | NceError::Io(_)
        )
    }
}

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(NceError::Param(msg.into()))
}
