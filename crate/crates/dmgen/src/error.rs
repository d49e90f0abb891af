use std::io;
use std::path::PathBuf;

use dmgen_core::{DatagenError, ExpertError, SceneError};
use thiserror::Error;

/// Errors from reading or writing dataset containers.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a dmgen dataset (bad magic)")]
    BadMagic,
    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { expected: u32, found: u32 },
    #[error("checksum mismatch in {0}")]
    ChecksumMismatch(String),
    #[error("file is truncated")]
    Truncated,
    #[error("malformed data: {0}")]
    Malformed(String),
    #[error("embedded task spec does not match the header hash")]
    SpecMismatch,
    #[error("expected a {expected} file, found a {found} file")]
    KindMismatch { expected: &'static str, found: &'static str },
}

/// Errors from resolving a task spec.
#[derive(Debug, Error)]
pub enum TaskError {
    #[error("unknown task `{name}`; available: {available}")]
    Unknown { name: String, available: String },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid task spec: {0}")]
    Invalid(#[from] SceneError),
}

/// Anything the command line can fail with.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: FormatError },
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error("demo synthesis failed: {0}")]
    Expert(#[from] ExpertError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Usage(String),
}
