use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("state error: {0}")]
    State(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("vocabulary error: token {0:?} has no unigram probability")]
    Vocabulary(String),

    #[error("oracle scale exceeded: {cells} cells > {limit}; use the Sinkhorn solver")]
    OracleScale { cells: usize, limit: usize },

    #[error("training diverged: non-finite value in {param}")]
    Divergence { param: String },

    #[error("version error: {0}")]
    Version(String),

    #[error("path error: {0}")]
    Path(String),

    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension { op, detail: detail.into() }
    }

    /// Short machine-parsable category used by the command line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Config(_) => "config",
            Error::State(_) => "state",
            Error::Evaluation(_) => "evaluation",
            Error::Ingestion(_) => "ingestion",
            Error::Vocabulary(_) => "vocabulary",
            Error::OracleScale { .. } => "oracle-scale",
            Error::Divergence { .. } => "divergence",
            Error::Version(_) => "version",
            Error::Path(_) => "path",
            Error::Io(_) => "io",
        }
    }
}
