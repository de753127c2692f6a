use std::path::PathBuf;

/// Errors raised by the solver, integrator and experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum MuskatError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("multiplier is not Hermitian at wavenumber {wavenumber}: real output impossible")]
    SymmetryViolation { wavenumber: i64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("flattening failed: smallness condition tau*K*|eta|_Hs <= h/12 not met after {retries} retries (min dz rho = {min_jacobian:.3e}, required {required:.3e})")]
    Flattening {
        retries: usize,
        min_jacobian: f64,
        required: f64,
    },

    #[error("Krylov solver did not converge in {iterations} iterations (relative residual {residual:.3e}, target {tolerance:.1e})")]
    KrylovDivergence {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("monitor breach at t = {t}: {reason}")]
    MonitorBreach { t: f64, reason: String },

    #[error("time step underflow at t = {t}: dt = {dt:.3e} below dt_min = {dt_min:.3e} (last error estimate {error_estimate:.3e})")]
    DtUnderflow {
        t: f64,
        dt: f64,
        dt_min: f64,
        error_estimate: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, MuskatError>;

impl MuskatError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MuskatError::Io {
            path: path.into(),
            source,
        }
    }
}
