use thiserror::Error;

/// Errors surfaced by the simulation library.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("joint {joint} position {value} outside range [{min}, {max}]")]
    JointOutOfRange {
        joint: char,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid crane description: {0}")]
    Description(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pile did not relax: mean speed {mean_speed:.4} m/s after {time:.1} s")]
    PileRejected { mean_speed: f64, time: f64 },

    #[error("episode is not active")]
    EpisodeNotActive,

    #[error("action contains non-finite components")]
    NonFiniteAction,

    #[error("bad file format: {0}")]
    Format(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
