use std::path::PathBuf;

use thiserror::Error;

use crate::model::{Mode, Violation};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value where a finite number is required: {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid parameters: {}", format_violations(.0))]
    InvalidParams(Vec<Violation>),

    #[error("state inconsistent with mode {mode:?} at t = {t}: {reason}")]
    ModeInconsistent { mode: Mode, t: f64, reason: String },

    #[error("inadmissible transition {event} from mode {mode:?}")]
    InadmissibleTransition { event: &'static str, mode: Mode },

    #[error("chattering: more than {cap} events within one step near t = {t}")]
    Chattering { t: f64, cap: usize },

    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("open penetration cycle: trace must start and end at p = 0 (got p = {start} .. {end})")]
    UnclosedCycle { start: f64, end: f64 },

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("{path}: non-uniform sampling at line {line}")]
    NonUniformSampling { path: PathBuf, line: u64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical integration itself, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Chattering { .. } | Error::NonFiniteState { .. }
        )
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
