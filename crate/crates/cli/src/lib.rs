//! Driver for gradient checks, activation curves, training comparisons and
//! timing runs. The `erfact` binary is a thin argument layer over these
//! modules.

pub mod bench;
pub mod config;
pub mod curves;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod report;

pub use error::CliError;
