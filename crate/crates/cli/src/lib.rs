//! File formats, the entailment-service client and the command-line
//! surface around [`uqkit_core`].

pub mod commands;
pub mod entail;
pub mod error;
pub mod prompts;
pub mod records;
pub mod report;
pub mod tree_spec;

pub use error::CliError;
