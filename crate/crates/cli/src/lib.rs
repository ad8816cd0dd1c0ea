//! Command-line front end: configuration files and the `check`, `sweep` and
//! `lemmas` commands.

pub mod commands;
pub mod config;

use robreg_core::Error;

/// All hypotheses hold, the criterion held, or every instance was certified.
pub const EXIT_OK: i32 = 0;
/// A run-time failure that is neither bad input nor an exhausted budget.
pub const EXIT_FAILURE: i32 = 1;
/// Bad input: config, CSV, instance file or a violated precondition.
pub const EXIT_INPUT: i32 = 2;
/// A hypothesis check or the sweep criterion failed.
pub const EXIT_CRITERION: i32 = 3;
/// A numerical or sampling budget ran out before a verdict was reached.
pub const EXIT_BUDGET: i32 = 4;

/// Maps a library error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_validation() || matches!(err, Error::Io(_)) {
        EXIT_INPUT
    } else if err.is_budget() {
        EXIT_BUDGET
    } else {
        EXIT_FAILURE
    }
}
