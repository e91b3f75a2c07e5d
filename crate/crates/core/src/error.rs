use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("mechanism definition error: {0}")]
    MechanismDefinition(String),

    #[error("unsupported mechanism: {0}")]
    UnsupportedMechanism(String),

    #[error("line {line}: {reason}")]
    Schema { line: usize, reason: String },

    #[error("degenerate prior: {0}")]
    DegeneratePrior(String),

    #[error("degenerate effort profile: {0}")]
    DegenerateProfile(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
