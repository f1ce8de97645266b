use thiserror::Error;

use crate::vector_fields::State;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("trajectory diverged at t = {time} (x1 = {}, x2 = {})", state.x1, state.x2)]
    Divergence { time: f64, state: State },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("bound not applicable: {0}")]
    BoundInapplicable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
