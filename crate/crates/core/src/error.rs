use thiserror::Error;

use crate::learner::GainResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hurwitz (spectral abscissa {abscissa:.3e})")]
    NotHurwitz { abscissa: f64 },

    #[error("vectorized Lyapunov system is singular")]
    SingularSystem,

    #[error("initial gain does not stabilize the plant (closed-loop abscissa {abscissa:.3e})")]
    NotStabilizing { abscissa: f64 },

    #[error("no convergence after {iterations} iterations (last change {last_change:.3e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("learner did not converge after {} iterations", .0.iterates.len())]
    LearnerNoConvergence(Box<GainResult>),

    #[error("rank deficient: need {required}, numerical rank {achieved}")]
    RankDeficient { required: usize, achieved: usize },

    #[error("eigenvalue routine failed to converge")]
    EigFailure,

    #[error(
        "extracted value matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})"
    )]
    NonPositiveP { min_eigenvalue: f64 },

    #[error("state diverged: |x|_inf = {norm:.3e} at t = {time:.4}")]
    Divergence { time: f64, norm: f64 },

    #[error("insufficient data: need {needed} samples, log has {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("camouflage channel required but the log has none")]
    MissingPsi,

    #[error("window [{start}, {end}] is outside the log span [{log_start}, {log_end}]")]
    WindowOutOfRange {
        start: f64,
        end: f64,
        log_start: f64,
        log_end: f64,
    },

    #[error("identification regressor is ill-conditioned (rank {rank} < {required})")]
    IllConditioned { rank: usize, required: usize },

    #[error("matrix logarithm undefined: eigenvalue on the closed negative real axis")]
    LogBranch,

    #[error("calibration window contains no samples")]
    EmptyWindow,

    #[error("calibration produced a zero threshold")]
    DegenerateCalibration,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of the numerical pipeline, as opposed to bad input or IO.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::InvalidInput(_) | Error::NonFinite(_) | Error::Io(_) | Error::Parse(_)
        )
    }
}
