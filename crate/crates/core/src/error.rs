use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is singular (|det| = {det:e})")]
    SingularMatrix { det: f64 },

    #[error("power-constrained solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("precoder row {row} is all zero")]
    ZeroRow { row: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("payload does not fit layout: {0}")]
    LayoutOverflow(String),

    #[error("stream too short: need {needed} symbols, have {available}")]
    OutOfBounds { needed: usize, available: usize },

    #[error("no start-of-superframe found (peak metric {peak:.3})")]
    NoSync { peak: f64 },

    #[error("differential frequency beyond pilot-rate Nyquist (coarse estimate {coarse_hz:.1} Hz)")]
    Ambiguous { coarse_hz: f64 },

    #[error("modcod {0} not in table")]
    UnknownModcod(String),

    #[error("CSI from terminal {terminal} is stale ({age_s:.3} s old)")]
    StaleCsi { terminal: usize, age_s: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
