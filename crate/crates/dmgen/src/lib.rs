//! File formats, spec loading, reports and parallel campaigns on top of
//! [`dmgen_core`].

pub mod codec;
pub mod error;
pub mod format;
pub mod index;
pub mod parallel;
pub mod replay;
pub mod report;
pub mod task;

pub use error::{CliError, FormatError, TaskError};
pub use format::{read_dataset, read_source, write_dataset, write_source, DatasetFile, SourceFile};
