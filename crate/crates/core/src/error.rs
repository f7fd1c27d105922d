use thiserror::Error;

use crate::model::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("time {t} is outside the domain [{start}, {end}]")]
    Domain { t: f64, start: f64, end: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid simplex point: {0}")]
    Simplex(String),

    #[error("covering violation: no piece contains {0:?}")]
    Covering(Vec<f64>),

    /// State norm exceeded the divergence bound; `partial` holds the samples up
    /// to and including the last valid time.
    #[error("trajectory blew up after t = {t}")]
    BlowUp { t: f64, partial: Box<Trajectory> },

    #[error("non-finite value in dynamics at t = {t}")]
    NonFinite { t: f64 },

    #[error("policy returned mode {mode} outside the active index set at t = {t}")]
    Policy { t: f64, mode: usize },

    #[error("chattering guard tripped: {events} events by t = {t}")]
    Chattering { t: f64, events: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("input mismatch: {0}")]
    Input(String),

    #[error("falsifier produced a candidate that failed re-validation: {0}")]
    Revalidation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
