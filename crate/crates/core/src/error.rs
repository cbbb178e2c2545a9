use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("matrix is not positive definite: {0}")]
    Definiteness(String),

    #[error("unstable matrix (spectral radius {rho:.6}), fixed point undefined")]
    Instability { rho: f64 },

    #[error("iteration did not converge after {iterations} steps (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("pair is not stabilizable: {0}")]
    Stabilizability(String),

    #[error("(A, B) is not controllable: rank {rank} < {n}")]
    Uncontrollable { rank: usize, n: usize },

    #[error("gain is not stabilizing: closed-loop spectral radius {rho:.6}")]
    NotStabilizing { rho: f64 },

    #[error("contraction rate {rho:.6} infeasible: must exceed squared spectral radius {floor:.6} and be < 1")]
    InfeasibleRho { rho: f64, floor: f64 },

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("certificate check failed (margin {margin:.3e})")]
    Certificate { margin: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("least-squares regressor is rank deficient")]
    RankDeficient,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// True for errors caused by malformed user input (CLI exit code 2).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Io(_) | Error::Dimension(_) | Error::Invalid(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
