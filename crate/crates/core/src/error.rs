use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{row}: {message}")]
    Labels {
        file: PathBuf,
        row: usize,
        message: String,
    },

    #[error("missing article file for document {doc_id}: {path}")]
    MissingArticle { doc_id: String, path: PathBuf },

    #[error("unknown technique name {0:?}")]
    UnknownTechnique(String),

    #[error("invalid catalog: {0}")]
    Catalog(String),

    #[error("invalid fragment: {0}")]
    Fragment(String),

    #[error("token id {id} out of vocabulary of size {vocab}")]
    OutOfVocab { id: usize, vocab: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(
        "non-finite loss at epoch {epoch}, batch {batch}: tok={tok} sen={sen} def={def} logic={logic}"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        tok: f64,
        sen: f64,
        def: f64,
        logic: f64,
    },

    #[error("output directory {0} already exists (pass --force to overwrite)")]
    OutputExists(PathBuf),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable kind, used for the CLI's one-line failure report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Labels { .. } => "labels",
            Error::MissingArticle { .. } => "missing_article",
            Error::UnknownTechnique(_) => "unknown_technique",
            Error::Catalog(_) => "catalog",
            Error::Fragment(_) => "fragment",
            Error::OutOfVocab { .. } => "out_of_vocab",
            Error::Input(_) => "input",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::OutputExists(_) => "output_exists",
        }
    }
}
