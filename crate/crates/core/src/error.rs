use alloc::string::String;

/// Errors produced by the core routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("numeric failure in {context}: residual {residual:e}")]
    NumericFailure { context: &'static str, residual: f64 },

    /// The Lamperti clock ran past the simulated window of the path.
    #[error("time {requested} exceeds the clock accumulated over the path horizon ({accumulated})")]
    OutOfHorizon { requested: f64, accumulated: f64 },

    /// Antichain extraction needs every node below `h - a` to be expanded.
    #[error("CMJ frontier incomplete: node at height {height} below {needed} was never expanded")]
    IncompleteFrontier { height: f64, needed: f64 },

    #[error("truncated problem drops mass {tail:e}, above the 1e-8 budget")]
    TruncationWarning { tail: f64 },

    #[error("explosion guard tripped: {what} exceeded {limit}")]
    ExplosionGuard { what: &'static str, limit: u64 },
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}
