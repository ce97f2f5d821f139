use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not row-stochastic: {0}")]
    NotStochastic(String),

    #[error("steady-state solver failed ({reason}); residual {residual:.3e}")]
    Solver { reason: String, residual: f64 },

    #[error("steady state is not unique: {classes} closed communicating classes")]
    NonUnique { classes: usize },

    #[error("no eigenvalue within {tolerance:e} of 1 (closest distance {distance:.3e})")]
    NoUnitEigenvalue { tolerance: f64, distance: f64 },

    #[error("tail recursion did not reach residual mass {target:e} within {cap} states (left {residual:.3e})")]
    Truncation { cap: usize, residual: f64, target: f64 },

    #[error("state space of {states} states exceeds the guard of {limit}")]
    Guard { states: u128, limit: u128 },

    #[error("{subsystem}: {source}")]
    Subsystem {
        subsystem: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Tags an error with the subsystem whose solve produced it.
    pub fn in_subsystem(self, name: impl Into<String>) -> Self {
        Error::Subsystem {
            subsystem: name.into(),
            source: Box::new(self),
        }
    }

    /// Strips subsystem tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Subsystem { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) fn check_prob(name: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::invalid(format!("{name} = {value} is not a probability in [0, 1]")));
    }
    Ok(())
}

pub(crate) fn check_service(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0 && value <= 1.0) {
        return Err(Error::invalid(format!("{name} = {value} must lie in (0, 1]")));
    }
    Ok(())
}
