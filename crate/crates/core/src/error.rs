use thiserror::Error;

use crate::chain::ConfigReport;
use crate::storage::StorageError;
use crate::time::Time;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("configuration violates design constraints: {0}")]
    Constraint(ConfigReport),

    #[error("look-back window underflow: capture needs the waveform from {needed} but it is defined only from {origin}")]
    WindowUnderflow { needed: Time, origin: Time },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("event limit of {limit} exceeded; runaway configuration")]
    EventOverflow { limit: usize },

    #[error(transparent)]
    Storage(#[from] StorageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
