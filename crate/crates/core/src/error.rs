use std::path::PathBuf;

use crate::providers::ProviderError;

/// Errors produced while building or loading a corpus.
#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("duplicate document id `{0}`")]
    DuplicateDocument(String),
    #[error("duplicate passage id `{0}`")]
    DuplicatePassage(String),
    #[error("{path}:{line}: malformed record: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Errors produced by the retrieval layer.
#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("passage `{0}` not found in index")]
    PassageNotFound(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("index cache {path}: {reason}")]
    Cache { path: PathBuf, reason: String },
}

/// Errors raised when rendering or loading prompt templates.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template `{template}` is missing slot `{slot}`")]
    MissingSlot { template: String, slot: String },
    #[error("template `{template}` has no slot named `{slot}`")]
    UnexpectedSlot { template: String, slot: String },
    #[error("template `{template}` is malformed: {reason}")]
    Malformed { template: String, reason: String },
    #[error("error catalog is malformed: {0}")]
    Catalog(String),
    #[error("cannot read prompt data {path}: {reason}")]
    Io { path: String, reason: String },
}

/// Errors raised by the cognition/metacognition loop.
#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Errors raised by the evaluation harness.
#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset {path} has no valid records ({skipped} skipped)")]
    EmptyDataset { path: PathBuf, skipped: usize },
    #[error("dataset {path} is not valid json: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("cannot aggregate an empty result set")]
    EmptyResults,
    #[error("config error at line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}
