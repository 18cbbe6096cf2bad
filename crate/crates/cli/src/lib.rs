//! Library side of the `treecode` binary: one function per subcommand and
//! the built-in acceptance checks.

pub mod commands;
pub mod selftest;

pub use commands::{
    cmd_audit, cmd_bound, cmd_build, cmd_search, cmd_selftest, cmd_verify, exit_code_for, Format,
    Outcome, RunConfig, Status, FORMULAS,
};
