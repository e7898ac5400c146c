use thiserror::Error;

/// Error type shared across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The agnostic encoding and the edge state went out of sync.
    #[error("stale encoding: {0}")]
    StaleEncoding(String),

    /// A federation round was invoked with no usable contributions.
    #[error("degenerate federation round: {0}")]
    DegenerateRound(String),

    /// Training produced a non-finite loss; aborted with diagnostics.
    #[error("training diverged: loss = {loss} at slot {slot}")]
    TrainingDiverged { loss: f64, slot: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
