use thiserror::Error;

use crate::metrics::EpisodeTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("numerical blowup at step {step}: {what}")]
    Blowup { step: usize, what: String },

    #[error("plasticity blowup at step {step}")]
    PlasticityBlowup { step: usize },

    #[error("DARE divergence after {iters} iterations (last change {last_delta:e})")]
    DareDivergence { iters: usize, last_delta: f64 },

    /// A closed-loop rollout hit a non-finite value; carries the finite prefix.
    #[error("episode aborted at step {step}: {source}")]
    EpisodeAborted {
        step: usize,
        source: Box<Error>,
        prefix: Box<EpisodeTrace>,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Dimension { .. } | Error::Empty(_) => 1,
            Error::Blowup { .. }
            | Error::PlasticityBlowup { .. }
            | Error::DareDivergence { .. }
            | Error::EpisodeAborted { .. } => 2,
            Error::Io(_) => 3,
        }
    }
}
