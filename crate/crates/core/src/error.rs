use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("unsupported parameter regime: {0}")]
    UnsupportedRegime(String),

    #[error("no threshold found in [0, {upper}]")]
    NoThreshold { upper: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (best residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("singular Jacobian at Newton iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("linearized dynamics not stable: min Re(eig A) = {min_re:e}")]
    Unstable { min_re: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("variance has non-negligible imaginary part {imag:e} (real part {real:e})")]
    NonRealVariance { real: f64, imag: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid SDE configuration: {0}")]
    InvalidSdeConfig(String),

    #[error("sweep aborted after {completed} of {total} frequencies: {source}")]
    Sweep {
        completed: usize,
        total: usize,
        #[source]
        source: Box<Error>,
    },
}
