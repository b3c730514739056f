use std::path::PathBuf;

use process_rule::Error;
use thiserror::Error as ThisError;

/// Exit codes. Validity, parse and undefined-conditional failures are fixed
/// so scripts can assert on them.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDITY: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const UNDEFINED_CONDITIONAL: i32 = 3;
    pub const COMPOSITION: i32 = 4;
    pub const RECONSTRUCTION: i32 = 5;
    pub const USAGE: i32 = 64;
    pub const IO: i32 = 66;
}

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("{context}: {source}")]
    Core { context: String, source: Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn core(context: impl Into<String>, source: Error) -> Self {
        Self::Core {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } => exit::IO,
            Self::Parse { .. } => exit::PARSE,
            Self::Usage(_) => exit::USAGE,
            Self::Core { source, .. } => match source {
                Error::Shape(_) | Error::Size(_) | Error::Validity(_) => exit::VALIDITY,
                Error::UndefinedConditional(_) => exit::UNDEFINED_CONDITIONAL,
                Error::Composition(_) => exit::COMPOSITION,
                Error::Precondition(_) | Error::Reconstruction(_) => exit::RECONSTRUCTION,
            },
        }
    }
}
