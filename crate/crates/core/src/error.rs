use thiserror::Error;

/// Errors raised anywhere in the emulation toolkit.
///
/// The variants map onto the process exit codes used by the command-line
/// front end, so keep them coarse.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-domain input supplied by the caller.
    #[error("input error: {0}")]
    Input(String),

    /// A factorization or iterative scheme broke down.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Every restart of a hyperparameter search failed.
    #[error("optimization error: {0}")]
    Optimization(String),

    /// Inconsistent settings, e.g. a fallback threshold without a simulator.
    #[error("configuration error: {0}")]
    Config(String),

    /// The ground-truth provider could not answer for a point.
    #[error("simulation error at {point:?}: {reason}")]
    Simulation { point: Vec<f64>, reason: String },

    /// A data file could not be ingested.
    #[error("{path}:{line}: {reason}")]
    Ingest {
        path: String,
        line: u64,
        reason: String,
    },

    /// Propagation found no sample in the valid region.
    #[error("no samples classified into the valid region (tally {tally:?})")]
    EmptyDistribution { tally: [usize; 3] },

    /// A pipeline stage failed; carries the stage name.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// I/O error whose message names the file.
    pub(crate) fn io_at(path: &std::path::Path, e: std::io::Error) -> Self {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    }

    /// Wraps the error with the name of the pipeline stage it escaped from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
