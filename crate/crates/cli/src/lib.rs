//! Scenario handling and subcommand bodies for the `harvest` binary.

pub mod commands;
pub mod scenario;

use harvest_core::Error;

pub use scenario::{ConfigError, Scenario};

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IDENTIFICATION: u8 = 3;
pub const EXIT_SIZING: u8 = 4;
pub const EXIT_INTEGRATION: u8 = 5;

/// Process exit code for a failed command.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::InvalidParameter { .. }
                | Error::DegenerateAxis { .. }
                | Error::Config(_)
                | Error::InvalidMeasurement(_)
                | Error::Surface(_) => EXIT_CONFIG,
                Error::UnbracketedOptimum { .. } => EXIT_IDENTIFICATION,
                Error::Sizing { .. } => EXIT_SIZING,
                Error::Integration { .. } => EXIT_INTEGRATION,
                Error::Conditioning { .. } => EXIT_OTHER,
            };
        }
    }
    EXIT_OTHER
}
