use thiserror::Error;

/// Errors raised by the toolkit.
///
/// The variants map onto the command-line exit-code table: configuration and
/// precondition problems exit with 2, I/O and format problems with 3, and
/// numerical invariant failures with 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("under-resolved: {0}")]
    Resolution(String),

    #[error("resolution too coarse: no convex decomposition over {points} sphere points")]
    ResolutionTooCoarse { points: usize },

    #[error("hull too thin here: no wave-cone direction with positive half-length")]
    HullTooThin,

    #[error("mean obstruction: no periodic anti-divergence exists (|mean| = {mean:e})")]
    MeanObstruction { mean: f64 },

    #[error("numerical invariant failed: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("field file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::Precondition(_)
            | Error::Domain(_)
            | Error::Resolution(_)
            | Error::ResolutionTooCoarse { .. }
            | Error::HullTooThin
            | Error::Config(_) => 2,
            Error::Format(_) | Error::Io(_) => 3,
            Error::MeanObstruction { .. } | Error::Numerical(_) => 4,
        }
    }
}
