use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate scaling: {0}")]
    DegenerateScaling(String),

    #[error("state dimension {got} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time {time} outside recorded force span [{start}, {end}]")]
    OutsideRecord { time: f64, start: f64, end: f64 },

    #[error("non-finite state at t = {time} (component {component})")]
    Divergence { time: f64, component: usize },

    #[error("divergence at f = {frequency_hz} Hz: {source}")]
    SweepDivergence {
        frequency_hz: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{chain} chain diverged first at t = {time}")]
    ChainDivergence { chain: &'static str, time: f64 },

    #[error("unclassifiable signal: {0}")]
    Unclassifiable(String),

    #[error("singular (J - I) in Newton step; orbit is near-marginal (residual {residual:e})")]
    SingularJacobian { residual: f64 },

    #[error("Newton did not converge: residual {residual:e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },

    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::SweepDivergence { .. }
                | Error::ChainDivergence { .. }
                | Error::Unclassifiable(_)
                | Error::SingularJacobian { .. }
                | Error::NotConverged { .. }
                | Error::Eigen(_)
        )
    }
}
