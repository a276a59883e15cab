use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid {entity}: {message}")]
    Invalid { entity: String, message: String },

    #[error("network is disconnected: bus {bus} is not reachable from bus {root}")]
    Disconnected { root: usize, bus: usize },

    #[error("algebraic block is singular (condition estimate {condition:e})")]
    SingularAlgebraicBlock { condition: f64 },

    #[error("bus {bus} has no dynamic frequency state")]
    NoFrequencyState { bus: usize },

    #[error("unknown parameter {0}")]
    UnknownParameter(String),

    #[error("eigenvalue iteration did not converge")]
    EigenNoConvergence,

    #[error("modes {i} and {j} are degenerate (|λi - λj| = {separation:e})")]
    DegenerateModes { i: usize, j: usize, separation: f64 },

    #[error("mode {mode} has eigenvalue {re:+e}{im:+e}i too close to zero")]
    ZeroEigenvalue { mode: usize, re: f64, im: f64 },

    #[error("mode {mode} is not strictly stable (Re λ = {re:e})")]
    Unstable { mode: usize, re: f64 },

    #[error("eigenvalue {re:+e}{im:+e}i is not oscillatory")]
    NotOscillatory { re: f64, im: f64 },

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("integration step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("{0}")]
    Config(String),

    #[error("empty measurement set")]
    EmptyData,

    #[error("degenerate measurement cloud: fitted radius {0:e} is not positive")]
    DegenerateCloud(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(entity: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid { entity: entity.into(), message: message.into() }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { location: location.into(), message: message.into() }
    }

    /// True for errors caused by malformed or inconsistent user input, as
    /// opposed to numerical failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Invalid { .. }
                | Error::Disconnected { .. }
                | Error::NoFrequencyState { .. }
                | Error::UnknownParameter(_)
                | Error::Config(_)
                | Error::EmptyData
                | Error::Io(_)
        )
    }
}
