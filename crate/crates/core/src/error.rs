use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters, constraints, settings or scenario files.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("state left the unit interval at t = {time}: S = {s}, I = {i}, R = {r} (step too large?)")]
    StateBlowup { time: f64, s: f64, i: f64, r: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("records use different sampling grids: {0}")]
    GridMismatch(String),

    #[error("time {time} outside record span [{start}, {end}]")]
    OutOfRange { time: f64, start: f64, end: f64 },

    #[error("policy phase moved backward at t = {time}")]
    PhaseRegression { time: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that stem from user-supplied configuration.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Parse { .. })
    }
}
