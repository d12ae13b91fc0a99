use crate::fock::FockError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("outside the domain: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("zero probability: {0}")]
    ZeroProbability(String),
    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),
    #[error("no feasible point: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn unit_interval(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {value} is outside [0, 1]")))
    }
}

pub(crate) fn positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {value} must be positive")))
    }
}
