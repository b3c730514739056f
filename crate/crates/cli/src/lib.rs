//! Batch front end for scenario files: validation, probability tables,
//! updates, reconstruction, lemma checks and sampling comparisons.

pub mod commands;
pub mod document;
pub mod error;

pub use commands::{Output, Settings};
pub use document::ScenarioDocument;
pub use error::CliError;
