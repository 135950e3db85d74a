//! Configuration, orchestration and file output for the `micropump` binary.

pub mod config;
pub mod output;
pub mod report;
pub mod sweep;

pub use config::{load_config, ConfigError, RunConfig};
pub use sweep::{run_single, run_sweep, SweepResult, SweepRow};

/// Process exit code for a failure.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use micropump_core::Error as E;
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<E>() {
        Some(E::Validation(_) | E::MaterialFile(_) | E::UnknownStrategy { .. }) => 2,
        Some(E::Io(_)) => 1,
        Some(_) => 3,
        None => 1,
    }
}
