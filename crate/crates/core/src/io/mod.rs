//! Config files and CSV output.

pub mod config;
pub mod report;

use thiserror::Error;

pub use config::{
    canonical_json, config_hash, load_config, load_config_file, parse_config, ConfigFile,
    LoadedConfig, SweepSpec,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at `{key}` (line {line}, column {column}): {message}")]
    Parse {
        key: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("validation error: {0}")]
    Invalid(String),
}

impl IoError {
    /// Whether the error comes from the file system rather than the content.
    pub fn is_io(&self) -> bool {
        matches!(self, IoError::Read { .. } | IoError::Write { .. })
    }
}
